import math

import numpy as np
import pytest

from bidirelay import kernels as K
from bidirelay.oracle import exhaustive_solve
from bidirelay.solver import SolverOptions, dual_function, solve
from bidirelay.solver.core import SCHEME_ROLES, run_dual, subgradient_from_sums
from bidirelay.solver.verify import budget_excess, coupling_violation
from bidirelay.errors import IterationCapExceeded
from bidirelay.types import ChannelRealization, ProblemInstance, Role

from conftest import make_instance


def random_dual(rng, w=(1.0, 1.0)):
    mu = rng.uniform(0, 2, 2)
    lvl = np.array(w) + mu
    lb1 = rng.uniform(0, 1, 2) * lvl
    lab = rng.uniform(0, 1) * lvl.min()
    lc1 = rng.uniform(0, 1, 2) * (lvl - lab)
    alpha = rng.uniform(0.005, 0.5, 3)
    return np.array([*lb1, *lc1, lab, *mu, *alpha])


def swapped(inst):
    a = inst.channels.array
    ch = ChannelRealization(a[[1, 0, 3, 2, 5, 4]])
    return ProblemInstance(ch, inst.w_b, inst.w_a, inst.r_b, inst.r_a, inst.p_b, inst.p_a, inst.p_r)


def test_subgradient_of_empty_allocation():
    inst = make_instance(n=4, r=(1.5, 2.5))
    d = subgradient_from_sums(np.zeros(K.N_SUMS), inst)
    assert np.array_equal(d[:5], np.zeros(5))
    assert d[5] == -1.5 and d[6] == -2.5
    assert np.array_equal(d[7:], [inst.p_a, inst.p_b, inst.p_r])


def test_subgradient_inequality():
    inst = make_instance(n=8, seed=3, r=(1.0, 1.0))
    rng = np.random.default_rng(7)
    x = random_dual(rng)
    g0, d = dual_function(x, inst)
    for _ in range(100):
        y = random_dual(rng)
        gy, _ = dual_function(y, inst)
        assert gy >= g0 + d @ (y - x) - 1e-9 * max(1.0, abs(g0))


def test_single_subcarrier_matches_enumeration():
    rng = np.random.default_rng(11)
    for _ in range(5):
        inst = ProblemInstance(ChannelRealization(rng.exponential(size=(6, 1))), 1.0, 1.3,
                               0.0, 0.0, 10.0, 20.0, 15.0)
        out = solve(inst)
        _, best = exhaustive_solve(inst)
        assert out.objective == pytest.approx(best, rel=1e-3, abs=1e-9)


def test_swap_symmetry():
    inst = make_instance(n=8, seed=5, w=(1.0, 1.5), r=(0.5, 1.0))
    a, b = solve(inst), solve(swapped(inst))
    # mirrored instances share a dual function; recovered primals may differ slightly
    assert a.dual_value == pytest.approx(b.dual_value, rel=1e-3)
    assert a.objective == pytest.approx(b.objective, rel=1e-2)


@pytest.mark.parametrize("scheme", sorted(SCHEME_ROLES))
def test_feasibility_and_weak_duality(scheme):
    for seed in range(3):
        inst = make_instance(n=16, seed=seed, r=(0.3, 0.3))
        out = solve(inst, SolverOptions.for_scheme(scheme))
        assert not out.outage
        assert budget_excess(inst, out) <= 1e-9 * max(inst.p_a, inst.p_b, inst.p_r)
        assert coupling_violation(inst, out) <= 1e-9
        for node, budget in zip("ABR", inst.budgets):
            used = out.allocation.node_power_used[node]
            assert used == 0.0 or used >= budget * (1 - 1e-12)  # no budget left unused
        assert out.rate_a >= inst.r_a - 1e-9 and out.rate_b >= inst.r_b - 1e-9
        assert out.objective <= out.dual_value + 1e-6
        assert out.gap_estimate >= -1e-6
        used = set(out.allocation.roles().tolist())
        assert used <= set(SCHEME_ROLES[scheme]) | {Role.IDLE}


def test_best_dual_value_is_monotone():
    inst = make_instance(n=32, seed=1)
    mask = K.role_mask(SCHEME_ROLES["proposed"], inst.n)
    run = run_dual(inst, mask, SolverOptions())
    best = np.minimum.accumulate(run.values)
    assert np.all(np.diff(best) <= 0)
    assert best[-1] == run.best_value


def test_scheme_ordering():
    for seed in range(4):
        inst = make_instance(n=16, seed=seed)
        v = {s: solve(inst, SolverOptions.for_scheme(s)).objective for s in SCHEME_ROLES}
        assert v["BM2"] >= v["BM1"] * (1 - 0.02)
        assert v["proposed"] >= v["BM2"] * (1 - 0.02)


def test_outage_zeroes_rates():
    inst = make_instance(n=4, snr_db=0.0, r=(50.0, 50.0))
    out = solve(inst)
    assert out.outage and out.status == "infeasible"
    assert out.rate_a == out.rate_b == out.objective == 0.0
    assert math.isnan(out.gap_estimate)
    assert out.pre_outage_rates is not None


def test_argmax_at_final_dual_point():
    inst = make_instance(n=8, seed=2)
    out = solve(inst, SolverOptions(polish="never"))
    g, _ = dual_function(out.dual_point, inst)
    assert g == pytest.approx(out.dual_value, rel=1e-12)


def test_weight_scaling_invariance():
    inst = make_instance(n=16, seed=4, w=(1.0, 2.0))
    scaled = ProblemInstance(inst.channels, 3.0, 6.0, 0.0, 0.0, inst.p_a, inst.p_b, inst.p_r)
    a, b = solve(inst), solve(scaled)
    assert b.objective == pytest.approx(3 * a.objective, rel=1e-3)


def test_relative_gap_shrinks_with_n():
    gaps = {}
    for n in (4, 16, 64, 256):
        vals = []
        for seed in range(3):
            out = solve(make_instance(n=n, seed=seed), SolverOptions(polish="never"))
            vals.append(out.gap_estimate / out.dual_value)
        gaps[n] = float(np.mean(vals))
    assert gaps[256] < gaps[4]
    assert gaps[256] < 0.01


def test_strict_iteration_cap():
    inst = make_instance(n=8)
    with pytest.raises(IterationCapExceeded):
        solve(inst, SolverOptions(iter_cap=3, strict=True))
    out = solve(inst, SolverOptions(iter_cap=3))
    assert out.status == "iteration_cap" and not out.converged


def test_oracle_residual_recorded():
    out = solve(make_instance(n=4, seed=9), SolverOptions(oracle_check=True))
    assert out.oracle_residual is not None and out.oracle_residual < 1e-8
