import numpy as np
import pytest

from bidirelay.solver.rates import evaluate_rates, hop_rates, two_way_split
from bidirelay.types import Allocation, ProblemInstance, Role

from conftest import flat_channels


def test_symmetric_sum_face_max_min_split():
    assert two_way_split(2, 2, 3, 2, 2, (1, 1)) == (pytest.approx(1.5), pytest.approx(1.5))


def test_empty_two_way():
    assert two_way_split(0, 0, 0, 0, 0, (1, 1)) == (0.0, 0.0)
    inst = ProblemInstance(flat_channels(2))
    alloc = Allocation.from_arrays(np.array([Role.DT_A, Role.DT_B]), np.ones(2), np.zeros(2))
    r = evaluate_rates(alloc, inst)
    assert r[("A", "two-way")] == 0.0 and r[("B", "two-way")] == 0.0
    assert r[("A", "direct")] == pytest.approx(1.0)


def test_weighted_vertex_choice():
    ra, rb = two_way_split(3, 2, 4, 5, 5, (2, 1))
    assert (ra, rb) == (pytest.approx(3), pytest.approx(1))


def test_floors_select_feasible_point():
    ra, rb = two_way_split(3, 3, 4, 5, 5, (2, 1), floors=(0, 1.5))
    assert (ra, rb) == (pytest.approx(2.5), pytest.approx(1.5))
    assert two_way_split(1, 1, 2, 1, 1, (1, 1), floors=(1.5, 0)) is None


def test_random_caps_against_grid():
    rng = np.random.default_rng(0)
    for _ in range(200):
        a1, b1, a2, b2 = rng.uniform(0, 5, 4)
        s = rng.uniform(0, a1 + b1)
        w = tuple(rng.uniform(0.1, 2, 2))
        ra, rb = two_way_split(a1, b1, s, a2, b2, w)
        assert ra <= min(a1, a2) + 1e-12 and rb <= min(b1, b2) + 1e-12 and ra + rb <= s + 1e-12
        x = np.linspace(0, min(a1, a2, s), 801)
        best_b = np.minimum(min(b1, b2), np.maximum(s - x, 0))
        grid = np.max(w[0] * x + w[1] * best_b)
        assert w[0] * ra + w[1] * rb >= grid - 1e-6
        assert w[0] * ra + w[1] * rb <= grid + w[0] * (x[1] - x[0]) + 1e-9


def test_one_way_takes_minimum_hop():
    g = flat_channels(2)
    inst = ProblemInstance(g)
    alloc = Allocation.from_arrays(np.array([Role.OW1_A, Role.OW2_A]), np.array([3.0, 1.0]),
                                   np.zeros(2))
    r = evaluate_rates(alloc, inst)
    assert r[("A", "one-way")] == pytest.approx(1.0)
    h = hop_rates(alloc, inst)
    assert h.b1_a == pytest.approx(2.0) and h.b2_a == pytest.approx(1.0)
