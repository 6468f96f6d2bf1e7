import math

import numpy as np
import pytest

from bidirelay import _kernels_py, kernels as K
from bidirelay.errors import NonPositivePrice
from bidirelay.solver.inner import (ProfitVector, assign_subcarrier, bc_objective, bc_power,
                                    compute_profits, inner_solution, mac_objective, mac_residual,
                                    solve_mac_powers, waterfill_direct, waterfill_oneway_hop1,
                                    waterfill_oneway_hop2)
from bidirelay.solver.verify import grid_max_2d, maximize_1d
from bidirelay.types import ACTIVE_ROLES, DualPoint, ProblemInstance, Role

from conftest import flat_channels, make_instance

S = math.log(2.0)


def test_waterfill_examples():
    assert waterfill_direct(2 * S, 1.0, 1.0) == pytest.approx(1.0, abs=1e-15)
    assert waterfill_direct(S, 1.0, 1.0) == 0.0
    assert waterfill_direct(1.0, 0.5, 0.1) == 0.0
    assert waterfill_direct(3.0, 1.0, 0.0) == 0.0
    assert waterfill_oneway_hop1(2 * S, 1.0, 1.0) == pytest.approx(1.0, abs=1e-15)
    assert waterfill_oneway_hop1(0.0, 1.0, 7.0) == 0.0
    assert waterfill_oneway_hop2(S, 0.5, 1.0) == pytest.approx(1.0, abs=1e-15)
    assert waterfill_oneway_hop2(0.0, 0.5, 3.0) == 0.0


@pytest.mark.parametrize("price", [0.0, -1.0])
def test_waterfill_needs_positive_price(price):
    with pytest.raises(NonPositivePrice):
        waterfill_direct(1.0, price, 1.0)


def test_waterfill_matches_scalar_search():
    rng = np.random.default_rng(0)
    for _ in range(300):
        level, price, gain = rng.uniform(0, 5), rng.uniform(0.01, 3), rng.uniform(0, 10)
        p = waterfill_direct(level, price, gain)
        f = lambda q: level * math.log2(1 + q * gain) - price * q
        df = lambda q: level * gain / (S * (1 + q * gain)) - price
        q, _ = maximize_1d(f, max(level / (S * price), 1e-9), df)
        assert abs(p - q) < 1e-6
        # derivative-free search agrees to its own (coarser) precision
        q2, _ = maximize_1d(f, max(level / (S * price), 1e-9))
        assert abs(p - q2) < 1e-6 * max(1.0, p) + 1e-7 * p


def test_mac_decoupled_example():
    pa, pb = solve_mac_powers(2 * S, 2 * S, 0.0, 1.0, 1.0, 1.0, 1.0)
    assert (pa, pb) == (pytest.approx(1.0, abs=1e-12), pytest.approx(1.0, abs=1e-12))


def test_mac_all_zero_multipliers():
    assert solve_mac_powers(0, 0, 0, 1, 1, 1, 1) == (0.0, 0.0)


def test_mac_matches_grid_example():
    args = (S, S, S, 1.0, 1.0, 1.0, 2.0)
    pa, pb = solve_mac_powers(*args)
    qa, qb, _ = grid_max_2d(lambda a, b: mac_objective(a, b, *args), 2 * S / (S * 1.0),
                            2 * S / (S * 1.0))
    assert abs(pa - qa) < 1e-4 and abs(pb - qb) < 1e-4
    ra, rb = mac_residual(pa, pb, *args)
    if pa > 0:
        assert abs(ra) < 1e-10
    if pb > 0:
        assert abs(rb) < 1e-10


def test_mac_random_against_grid():
    rng = np.random.default_rng(1)
    for _ in range(40):
        la, lb, lab = rng.uniform(0, 2, 3)
        aa, ab = rng.uniform(0.05, 2, 2)
        ga, gb = rng.uniform(0.01, 10, 2)
        pa, pb = solve_mac_powers(la, lb, lab, aa, ab, ga, gb)
        f = lambda a, b: mac_objective(a, b, la, lb, lab, aa, ab, ga, gb)
        qa, qb, _ = grid_max_2d(f, (la + lab) / (S * aa), (lb + lab) / (S * ab))
        assert abs(pa - qa) < 1e-4 and abs(pb - qb) < 1e-4
        assert f(pa, pb) >= f(qa, qb) - 1e-9


def test_bc_examples():
    assert bc_power(S, S, 1.0, 1.0, 1.0) == pytest.approx(1.0, abs=1e-15)
    assert bc_power(S, S, 10.0, 1.0, 1.0) == 0.0


def test_bc_random_against_scalar_search():
    rng = np.random.default_rng(2)
    for _ in range(300):
        xa, xb, ar = rng.uniform(0, 3), rng.uniform(0, 3), rng.uniform(0.01, 2)
        gra, grb = rng.uniform(0, 10, 2)
        p = bc_power(xa, xb, ar, gra, grb)
        f = lambda q: bc_objective(q, xa, xb, ar, gra, grb)
        df = lambda q: (xa * grb / (1 + q * grb) + xb * gra / (1 + q * gra)) / S - ar
        q, _ = maximize_1d(f, max((xa + xb) / (S * ar), 1e-9), df)
        assert abs(p - q) < 1e-6


def _dual(**kw):
    base = dict.fromkeys(("lam_b1_a", "lam_b1_b", "lam_c1_a", "lam_c1_b", "lam_ab_c",
                          "mu_a", "mu_b"), 0.0)
    base.update(alpha_a=1.0, alpha_b=1.0, alpha_r=1.0)
    base.update(kw)
    return DualPoint(**base)


def test_priced_out_profits_are_zero():
    inst = ProblemInstance(flat_channels(1))
    d = _dual(lam_b1_a=0.5, lam_b1_b=0.5, lam_c1_a=0.3, lam_c1_b=0.3, lam_ab_c=0.3,
              alpha_a=1e6, alpha_b=1e6, alpha_r=1e6)
    profits, powers = inner_solution(0, d, inst)
    assert all(v == 0.0 for v in profits)
    assert powers.dt_a == 0.0 and powers.tw1 == (0.0, 0.0)


def test_single_active_profit():
    inst = ProblemInstance(flat_channels(1), w_a=2 * S, w_b=0.0)
    d = _dual(lam_b1_a=0.0, alpha_a=1.0, alpha_b=1.0, alpha_r=1.0, w_a=2 * S, w_b=0.0)
    # the one-way second hop and two-way second hop carry w_A; price them out
    d = DualPoint(**{**d.__dict__, "lam_b1_a": 2 * S, "lam_c1_a": 2 * S})
    pv = compute_profits(0, d, inst)
    assert pv.dt_a == pytest.approx(2 * S - 1, abs=1e-12)
    assert pv.dt_a == pytest.approx(0.386294361, abs=1e-9)
    assert pv.ow1_a == pytest.approx(2 * S - 1, abs=1e-12)  # same level on hop one
    assert pv.dt_b == pv.ow1_b == pv.ow2_a == pv.ow2_b == pv.tw2 == 0.0


def test_profits_dominate_grid_powers():
    inst = make_instance(n=6, seed=3)
    rng = np.random.default_rng(4)
    for _ in range(10):
        mu_a, mu_b = rng.uniform(0, 1, 2)
        lab = rng.uniform(0, 0.3)
        d = DualPoint(rng.uniform(0, 1 + mu_a), rng.uniform(0, 1 + mu_b),
                      rng.uniform(0, 1 + mu_a - lab), rng.uniform(0, 1 + mu_b - lab), lab,
                      mu_a, mu_b, *rng.uniform(0.005, 0.05, 3))
        for n in range(inst.n):
            pv = compute_profits(n, d, inst)
            assert all(v >= 0 for v in pv)
            g = {l: float(inst.channels.gain(l)[n]) for l in ("AB", "AR", "RB", "BR", "RA")}
            for p in np.linspace(0, 200, 41):
                assert pv.dt_a >= d.level("a") * math.log2(1 + p * g["AB"]) - d.alpha_a * p - 1e-9
                assert pv.ow2_a >= d.lam_b2("a") * math.log2(1 + p * g["RB"]) - d.alpha_r * p - 1e-9
                assert pv.tw2 >= bc_objective(p, d.xi("a"), d.xi("b"), d.alpha_r, g["RA"], g["RB"]) - 1e-9
                assert pv.tw1 >= mac_objective(p, p / 2, d.lam_c1_a, d.lam_c1_b, d.lam_ab_c,
                                               d.alpha_a, d.alpha_b, g["AR"], g["BR"]) - 1e-9


def test_assign_subcarrier_rules():
    assert assign_subcarrier(ProfitVector(0.5, 0.1, 0, 0, 0, 0, 0.4, 0)) is Role.DT_A
    assert assign_subcarrier(ProfitVector(*[0.0] * 8)) is Role.IDLE
    assert assign_subcarrier(ProfitVector(0.1, 0.7, 0.7, 0, 0, 0, 0, 0)) is Role.DT_B


@pytest.mark.parametrize("seed", range(5))
def test_kernel_backends_agree_with_scalar_reference(seed):
    inst = make_instance(n=32, seed=seed, r=(2, 2))
    rng = np.random.default_rng(seed)
    mu = rng.uniform(0, 1, 2)
    lab = rng.uniform(0, 0.3)
    x = np.array([rng.uniform(0, 1 + mu[0]), rng.uniform(0, 1 + mu[1]),
                  rng.uniform(0, 1 + mu[0] - lab), rng.uniform(0, 1 + mu[1] - lab), lab,
                  mu[0], mu[1], *rng.uniform(0.005, 0.05, 3)])
    mask = K.role_mask(ACTIVE_ROLES, inst.n)
    results = {b: K.inner_maximize(inst.channels.array, x, inst.weights, mask, b)
               for b in K.BACKENDS}
    ref_roles, ref_p1, ref_p2, ref_sums = results["python"]
    d = DualPoint.from_vector(x)
    for n in range(inst.n):
        pv = compute_profits(n, d, inst)
        assert ref_roles[n] == assign_subcarrier(pv)
    for roles, p1, p2, sums in results.values():
        assert np.array_equal(roles, ref_roles)
        assert np.allclose(p1, ref_p1, rtol=1e-10, atol=1e-12)
        assert np.allclose(sums, ref_sums, rtol=1e-10, atol=1e-12)


def test_backend_selection():
    assert "python" in K.BACKENDS
    assert K.DEFAULT_BACKEND in K.BACKENDS
    m = K.role_mask((0, 1), 3)
    assert m.shape == (3, 8) and m[:, :2].all() and not m[:, 2:].any()
    with pytest.raises(ValueError):
        K.role_mask(np.ones((2, 8)), 3)


def test_masked_roles_never_selected():
    inst = make_instance(n=64, seed=2)
    x = np.array([0.5, 0.5, 0.3, 0.3, 0.3, 0, 0, 0.01, 0.01, 0.01])
    for backend in K.BACKENDS:
        roles = K.inner_maximize(inst.channels.array, x, inst.weights,
                                 K.role_mask((0, 1), inst.n), backend)[0]
        assert set(roles.tolist()) <= {0, 1, 8}


def test_vectorised_mac_matches_scalar():
    rng = np.random.default_rng(7)
    ga, gb = rng.uniform(0.01, 5, 200), rng.uniform(0.01, 5, 200)
    pa, pb = _kernels_py.mac_powers(0.4, 0.6, 0.3, 0.02, 0.03, ga, gb)
    for i in range(200):
        qa, qb = solve_mac_powers(0.4, 0.6, 0.3, 0.02, 0.03, ga[i], gb[i])
        assert abs(pa[i] - qa) < 1e-9 * max(1, qa) and abs(pb[i] - qb) < 1e-9 * max(1, qb)
