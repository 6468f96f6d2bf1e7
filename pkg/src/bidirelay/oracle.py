"""Brute-force and convex-programming references.

Nothing here reuses the solver's water-filling or rate routines: the
per-assignment power problem is handed to a generic conic solver (cvxpy with
Clarabel), and the equal-power region comparisons use their own closed forms.
Agreement with :mod:`bidirelay.solver` is therefore evidence, not tautology.
"""

from __future__ import annotations

import itertools
import math
import warnings
from functools import lru_cache

import cvxpy as cp
import numpy as np
from scipy.optimize import linear_sum_assignment

from .types import ProblemInstance, Role

LN2 = math.log(2.0)
MAX_EXHAUSTIVE_N = 6
MAX_PAIRING_N = 8
MAX_CONVEX_N = 16

# power columns of the convex model: one per (role, transmitter)
_COLS = ("dt_a", "dt_b", "ow1_a", "ow1_b", "ow2_a", "ow2_b", "tw1_a", "tw1_b", "tw2")
_PAYER_COL = {0: "A", 1: "B", 2: "A", 3: "B", 4: "R", 5: "R", 6: "A", 7: "B", 8: "R"}
_ROLE_COLS = {Role.DT_A: (0,), Role.DT_B: (1,), Role.OW1_A: (2,), Role.OW1_B: (3,),
              Role.OW2_A: (4,), Role.OW2_B: (5,), Role.TW1: (6, 7), Role.TW2: (8,)}


class TooLarge(ValueError):
    """Instance too large for brute-force enumeration."""


class InfeasibleAssignment(ValueError):
    """No power allocation for this assignment meets the rate floors."""


def _log2_sum(gain, power):
    return cp.sum(cp.log(1 + cp.multiply(gain, power))) / LN2


@lru_cache(maxsize=None)
def _model(n: int):
    """Parametric convex program for a fixed assignment on ``n`` subcarriers.

    Parameters of the compiled problem: link gains, per-column power caps
    (zero where a column is not assigned), budgets, weights and rate floors.
    """
    gains = [cp.Parameter(n, nonneg=True) for _ in range(6)]
    gab, gba, gar, gbr, gra, grb = gains
    cap = cp.Parameter((n, 9), nonneg=True)
    budget = cp.Parameter(3, nonneg=True)
    weight = cp.Parameter(2, nonneg=True)
    floor = cp.Parameter(2, nonneg=True)
    p = cp.Variable((n, 9), nonneg=True)
    ow = cp.Variable(2, nonneg=True)  # one-way end-to-end rates of A and B
    tw = cp.Variable(2, nonneg=True)  # two-way rates
    direct = cp.Variable(2, nonneg=True)
    rate_a = direct[0] + ow[0] + tw[0]
    rate_b = direct[1] + ow[1] + tw[1]
    mac_sum = cp.sum(cp.log(1 + cp.multiply(gar, p[:, 6]) + cp.multiply(gbr, p[:, 7]))) / LN2
    cons = [
        p <= cap,
        direct[0] <= _log2_sum(gab, p[:, 0]), direct[1] <= _log2_sum(gba, p[:, 1]),
        ow[0] <= _log2_sum(gar, p[:, 2]), ow[0] <= _log2_sum(grb, p[:, 4]),
        ow[1] <= _log2_sum(gbr, p[:, 3]), ow[1] <= _log2_sum(gra, p[:, 5]),
        tw[0] <= _log2_sum(gar, p[:, 6]), tw[1] <= _log2_sum(gbr, p[:, 7]),
        tw[0] + tw[1] <= mac_sum,
        tw[0] <= _log2_sum(grb, p[:, 8]), tw[1] <= _log2_sum(gra, p[:, 8]),
        cp.sum(p[:, [0, 2, 6]]) <= budget[0],
        cp.sum(p[:, [1, 3, 7]]) <= budget[1],
        cp.sum(p[:, [4, 5, 8]]) <= budget[2],
        rate_a >= floor[0],
        rate_b >= floor[1],
    ]
    prob = cp.Problem(cp.Maximize(weight[0] * rate_a + weight[1] * rate_b), cons)
    return prob, gains, cap, budget, weight, floor, p


def _solve(prob) -> str:
    """Solve with Clarabel; on numerical failure retry with SCS, then looser Clarabel."""
    attempts = (dict(solver=cp.CLARABEL),
                dict(solver=cp.CLARABEL, max_iter=400, tol_gap_abs=1e-9, tol_gap_rel=1e-9,
                     static_regularization_constant=1e-7),
                dict(solver=cp.SCS, eps=1e-9, max_iters=200000))
    status = "solver_error"
    for kw in attempts:
        try:
            with warnings.catch_warnings():
                # inaccurate solutions are reported through the status instead
                warnings.simplefilter("ignore", UserWarning)
                prob.solve(**kw)
        except cp.error.SolverError:
            continue
        status = prob.status
        if status in (cp.OPTIMAL, cp.INFEASIBLE):
            break
    return status


def _assignment_caps(roles, budgets) -> np.ndarray:
    node_budget = dict(zip("ABR", budgets))
    caps = np.zeros((len(roles), 9))
    for n, role in enumerate(roles):
        for col in _ROLE_COLS.get(Role(role), ()):
            caps[n, col] = node_budget[_PAYER_COL[col]]
    return caps


def _pair_rates(ua: float, ub: float, s: float, weights) -> tuple[float, float]:
    """Best weighted point of ``{RA <= ua, RB <= ub, RA + RB <= s}``.

    Greedy in weight order; equal weights take the most balanced optimal point.
    """
    ua, ub, s = max(ua, 0.0), max(ub, 0.0), max(s, 0.0)
    wa, wb = weights
    if wa > wb:
        ra = min(ua, s)
        return ra, min(ub, s - ra)
    if wb > wa:
        rb = min(ub, s)
        return min(ua, s - rb), rb
    total = min(s, ua + ub)
    ra = min(max(total / 2, total - ub), ua)
    return ra, total - ra


def assignment_rates(inst: ProblemInstance, roles, p1, p2, weights=None) -> dict:
    """Per-user, per-mode rates of an allocation, computed from scratch."""
    g = inst.channels.array
    roles = np.asarray(roles)
    weights = inst.weights if weights is None else weights

    def tot(role, link, power):
        m = roles == role
        return float(np.sum(np.log2(1.0 + power[m] * g[link][m])))

    tw = roles == Role.TW1
    ua = min(tot(Role.TW1, 2, p1), tot(Role.TW2, 5, p1))
    ub = min(tot(Role.TW1, 3, p2), tot(Role.TW2, 4, p1))
    s = float(np.sum(np.log2(1.0 + p1[tw] * g[2][tw] + p2[tw] * g[3][tw])))
    ra_c, rb_c = _pair_rates(ua, ub, s, weights)
    return {
        ("A", "direct"): tot(Role.DT_A, 0, p1),
        ("B", "direct"): tot(Role.DT_B, 1, p1),
        ("A", "one-way"): min(tot(Role.OW1_A, 2, p1), tot(Role.OW2_A, 5, p1)),
        ("B", "one-way"): min(tot(Role.OW1_B, 3, p1), tot(Role.OW2_B, 4, p1)),
        ("A", "two-way"): ra_c,
        ("B", "two-way"): rb_c,
    }


def convex_power_for_assignment(assignment, inst: ProblemInstance, qos: bool = False,
                                weights=None):
    """Optimal powers for a fixed role per subcarrier.

    Parameters
    ----------
    assignment : sequence of Role or int
        Role of every subcarrier (IDLE allowed).
    qos : bool
        Enforce the instance's rate floors as constraints.
    weights : (float, float), optional
        Overrides the instance weights.

    Returns
    -------
    powers : (p_first, p_second)
        Arrays in the same convention as :class:`bidirelay.types.Allocation`.
    rates : dict
        Per-user, per-mode rates at those powers.
    objective : float
        Weighted sum rate.

    Raises
    ------
    TooLarge
        More than ``MAX_CONVEX_N`` subcarriers.
    InfeasibleAssignment
        With ``qos=True`` when the floors cannot be met.
    """
    roles = np.array([int(r) for r in assignment], dtype=np.int8)
    n = roles.size
    if n != inst.n:
        raise ValueError(f"assignment has {n} entries for {inst.n} subcarriers")
    if n > MAX_CONVEX_N:
        raise TooLarge(f"convex reference is capped at N={MAX_CONVEX_N}, got {n}")
    weights = inst.weights if weights is None else tuple(weights)
    prob, gains, cap, budget, weight, floor, p = _model(n)
    for param, row in zip(gains, inst.channels.array):
        param.value = row
    cap.value = _assignment_caps(roles, inst.budgets)
    budget.value = np.array(inst.budgets)
    weight.value = np.array(weights, dtype=float)
    floor.value = np.array(inst.qos if qos else (0.0, 0.0))
    status = _solve(prob)
    if status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
        if qos and status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
            raise InfeasibleAssignment("rate floors unreachable for this assignment")
        raise RuntimeError(f"convex reference failed with status {status}")

    sol = np.clip(p.value, 0.0, None) * (cap.value > 0)
    # interior-point solutions may overshoot a budget by ~1e-9; pull back
    for node, cols in (("A", [0, 2, 6]), ("B", [1, 3, 7]), ("R", [4, 5, 8])):
        used = math.fsum(sol[:, cols].ravel())
        limit = dict(zip("ABR", inst.budgets))[node]
        if used > limit:
            sol[:, cols] *= limit / used * (1 - 1e-15)
    p1 = np.zeros(n)
    p2 = np.zeros(n)
    for i, role in enumerate(roles):
        cols = _ROLE_COLS.get(Role(role), ())
        if cols:
            p1[i] = sol[i, cols[0]]
        if len(cols) == 2:
            p2[i] = sol[i, cols[1]]
    rates = assignment_rates(inst, roles, p1, p2, weights)
    ra = sum(v for (u, _), v in rates.items() if u == "A")
    rb = sum(v for (u, _), v in rates.items() if u == "B")
    return (p1, p2), rates, weights[0] * ra + weights[1] * rb


def _dangling(roles) -> bool:
    present = set(int(r) for r in roles)
    pairs = ((Role.OW1_A, Role.OW2_A), (Role.OW1_B, Role.OW2_B), (Role.TW1, Role.TW2))
    return any((a in present) != (b in present) for a, b in pairs)


def candidate_assignments(n: int, roles=tuple(Role)[:8]):
    """Assignments worth solving: every subcarrier active, no unmatched hop.

    An idle subcarrier is never better than the same subcarrier given to a
    direct role (whose power may be zero), and a first hop without a second hop
    (or vice versa) carries no end-to-end rate, so both are dominated.
    """
    for combo in itertools.product([int(r) for r in roles], repeat=n):
        if not _dangling(combo):
            yield combo


def exhaustive_solve(inst: ProblemInstance, qos: bool = False,
                     roles=tuple(Role)[:8]) -> tuple[tuple[Role, ...], float]:
    """Globally optimal assignment by enumeration.

    Returns the best assignment (first in enumeration order among equals) and
    its objective.  Raises :class:`TooLarge` above ``MAX_EXHAUSTIVE_N``.
    """
    if inst.n > MAX_EXHAUSTIVE_N:
        raise TooLarge(f"exhaustive search is capped at N={MAX_EXHAUSTIVE_N}, got {inst.n}")
    best, best_val = None, -math.inf
    for combo in candidate_assignments(inst.n, roles):
        try:
            _, _, val = convex_power_for_assignment(combo, inst, qos=qos)
        except InfeasibleAssignment:
            continue
        if val > best_val + 1e-12:
            best, best_val = combo, val
    if best is None:
        return tuple([Role.IDLE] * inst.n), -math.inf
    return tuple(Role(r) for r in best), best_val


# ---------------------------------------------------------------------------
# equal-power region comparisons


def _equal_power(budget: float, count):
    count = np.asarray(count, dtype=float)
    return np.divide(budget, count, out=np.zeros_like(count), where=count > 0)


def set_basis_region_point(inst: ProblemInstance, mac_set, bc_set, equal_power: bool = True,
                           weights=(1.0, 1.0)) -> tuple[float, float]:
    """Two-way rate pair for given first-hop and second-hop subcarrier sets.

    With ``equal_power`` each node splits its budget evenly over the
    subcarriers it transmits on; otherwise powers are optimised.
    """
    mac = sorted(set(int(i) for i in mac_set))
    bc = sorted(set(int(i) for i in bc_set))
    if set(mac) & set(bc):
        raise ValueError("first-hop and second-hop sets must be disjoint")
    if not mac or not bc:
        return 0.0, 0.0
    if not equal_power:
        roles = np.full(inst.n, Role.IDLE)
        roles[mac] = Role.TW1
        roles[bc] = Role.TW2
        _, rates, _ = convex_power_for_assignment(roles, inst, weights=weights)
        return rates[("A", "two-way")], rates[("B", "two-way")]
    gab, gba, gar, gbr, gra, grb = inst.channels.array
    pa = inst.p_a / len(mac)
    pb = inst.p_b / len(mac)
    pr = inst.p_r / len(bc)
    ua = min(np.log2(1 + pa * gar[mac]).sum(), np.log2(1 + pr * grb[bc]).sum())
    ub = min(np.log2(1 + pb * gbr[mac]).sum(), np.log2(1 + pr * gra[bc]).sum())
    s = np.log2(1 + pa * gar[mac] + pb * gbr[mac]).sum()
    return _pair_rates(float(ua), float(ub), float(s), weights)


def best_set_basis(inst: ProblemInstance) -> tuple[float, np.ndarray]:
    """Best equal-power sum rate over all (first hop, second hop, unused) splits.

    Returns the sum rate (weights 1, 1) and the label vector
    (0 unused, 1 first hop, 2 second hop) of a best split.
    """
    n = inst.n
    if n > MAX_PAIRING_N + 2:
        raise TooLarge(f"set-basis enumeration is capped at N={MAX_PAIRING_N + 2}")
    gab, gba, gar, gbr, gra, grb = inst.channels.array
    labels = np.array(list(itertools.product((0, 1, 2), repeat=n)), dtype=np.int8)
    mac = labels == 1
    bc = labels == 2
    pa = _equal_power(inst.p_a, mac.sum(axis=1))[:, None]
    pb = _equal_power(inst.p_b, mac.sum(axis=1))[:, None]
    pr = _equal_power(inst.p_r, bc.sum(axis=1))[:, None]
    ua = np.minimum((mac * np.log2(1 + pa * gar)).sum(axis=1), (bc * np.log2(1 + pr * grb)).sum(axis=1))
    ub = np.minimum((mac * np.log2(1 + pb * gbr)).sum(axis=1), (bc * np.log2(1 + pr * gra)).sum(axis=1))
    s = (mac * np.log2(1 + pa * gar + pb * gbr)).sum(axis=1)
    value = np.minimum(s, ua + ub)
    k = int(np.argmax(value))
    return float(value[k]), labels[k]


def _pair_value_matrix(inst: ProblemInstance, mac, bc, pa, pb, pr) -> np.ndarray:
    """Sum rate of every (first-hop, second-hop) subcarrier pair."""
    gab, gba, gar, gbr, gra, grb = inst.channels.array
    m = np.asarray(mac)[:, None]
    b = np.asarray(bc)[None, :]
    ua = np.minimum(np.log2(1 + pa * gar[m]), np.log2(1 + pr * grb[b]))
    ub = np.minimum(np.log2(1 + pb * gbr[m]), np.log2(1 + pr * gra[b]))
    s = np.log2(1 + pa * gar[m] + pb * gbr[m])
    return np.minimum(s, ua + ub)


def pairing_baseline(inst: ProblemInstance, equal_power: bool = True) -> float:
    """Best sum rate of one-to-one subcarrier pairing two-way relaying.

    Half of the subcarriers carry the first hop and are matched one-to-one to
    the other half; each pair has its own two-way region.  All ``C(N, N/2)``
    halves are tried; for a fixed half the best matching is an assignment
    problem (optimal powers: every matching is solved).
    """
    n = inst.n
    if n % 2 or n > MAX_PAIRING_N or n == 0:
        raise TooLarge(f"pairing baseline needs even N <= {MAX_PAIRING_N}, got {n}")
    half = n // 2
    best = 0.0
    for mac in itertools.combinations(range(n), half):
        bc = [i for i in range(n) if i not in mac]
        if equal_power:
            v = _pair_value_matrix(inst, mac, bc, inst.p_a / half, inst.p_b / half,
                                   inst.p_r / half)
            rows, cols = linear_sum_assignment(v, maximize=True)
            best = max(best, float(v[rows, cols].sum()))
        else:
            for perm in itertools.permutations(bc):
                best = max(best, _paired_optimal_power(inst, mac, perm))
    return best


def _paired_optimal_power(inst: ProblemInstance, mac, bc) -> float:
    gab, gba, gar, gbr, gra, grb = inst.channels.array
    k = len(mac)
    m, b = list(mac), list(bc)
    pa, pb, pr = cp.Variable(k, nonneg=True), cp.Variable(k, nonneg=True), cp.Variable(k, nonneg=True)
    ra, rb = cp.Variable(k, nonneg=True), cp.Variable(k, nonneg=True)
    cons = [
        cp.sum(pa) <= inst.p_a, cp.sum(pb) <= inst.p_b, cp.sum(pr) <= inst.p_r,
        ra <= cp.log(1 + cp.multiply(gar[m], pa)) / LN2,
        rb <= cp.log(1 + cp.multiply(gbr[m], pb)) / LN2,
        ra + rb <= cp.log(1 + cp.multiply(gar[m], pa) + cp.multiply(gbr[m], pb)) / LN2,
        ra <= cp.log(1 + cp.multiply(grb[b], pr)) / LN2,
        rb <= cp.log(1 + cp.multiply(gra[b], pr)) / LN2,
    ]
    prob = cp.Problem(cp.Maximize(cp.sum(ra + rb)), cons)
    _solve(prob)
    return float(prob.value)
