"""Turning a dual point into a feasible allocation.

Two recovery routes are offered and the solver keeps the better result:

* argmax recovery: take the per-subcarrier argmax roles and powers at the dual
  point and scale each node's powers onto its budget;
* LP reassignment: keep every role's optimal power at the dual point fixed and
  choose role fractions per subcarrier by a linear program over budgets, hop
  couplings and rate floors, then round the few fractional subcarriers.

The second route matters when profits tie exactly, e.g. both users' direct
roles on reciprocal channels at equal weights, where the argmax alone assigns
every tied subcarrier to the same user and overspends one budget.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import coo_matrix

from .. import _kernels_py as KP
from ..types import ProblemInstance, Role
from .rates import hop_rates_from_arrays, rates_from_hops, two_way_split, user_totals

# rows of the per-role contribution table
_AGG = ("direct_a", "direct_b", "b1_a", "b1_b", "b2_a", "b2_b",
        "c1_a", "c1_b", "c1_ab", "c2_a", "c2_b", "pow_a", "pow_b", "pow_r")
_ROW = {name: i for i, name in enumerate(_AGG)}


@dataclass(frozen=True)
class Candidate:
    """A feasible allocation with its evaluated rates."""

    roles: np.ndarray
    p1: np.ndarray
    p2: np.ndarray
    per_mode: dict
    rate_a: float
    rate_b: float
    objective: float
    meets_qos: bool

    def key(self) -> tuple[bool, float]:
        return (self.meets_qos, self.objective)


def scale_to_budgets(roles: np.ndarray, p1: np.ndarray, p2: np.ndarray,
                     budgets: tuple[float, float, float]) -> tuple[np.ndarray, np.ndarray]:
    """Scale each node's powers uniformly so that its total meets its budget.

    Overspent budgets are scaled down and partly unused ones scaled up; every
    hop rate is non-decreasing in every power, so filling a budget never
    lowers a rate.  The exactly rounded total (``math.fsum``) of the scaled
    powers is at most the budget; the factor is nudged down by ulps if
    rounding overshoots.  Nodes that transmit nothing are left alone.
    """
    p1, p2 = p1.copy(), p2.copy()
    tw1 = roles == Role.TW1
    charged = (
        [(p1, np.isin(roles, (Role.DT_A, Role.OW1_A, Role.TW1)))],
        [(p1, np.isin(roles, (Role.DT_B, Role.OW1_B))), (p2, tw1)],
        [(p1, np.isin(roles, (Role.OW2_A, Role.OW2_B, Role.TW2)))],
    )
    for parts, budget in zip(charged, budgets):
        orig = [arr[m].copy() for arr, m in parts]
        used = math.fsum(np.concatenate(orig))
        if used == budget or used == 0.0:
            continue
        factor = budget / used
        while True:
            scaled = [v * factor for v in orig]
            if math.fsum(np.concatenate(scaled)) <= budget:
                break
            factor = math.nextafter(factor, 0.0)
        for (arr, m), v in zip(parts, scaled):
            arr[m] = v
    return p1, p2


def evaluate_candidate(inst: ProblemInstance, roles: np.ndarray, p1: np.ndarray,
                       p2: np.ndarray, split_weights) -> Candidate:
    """Rates of a budget-feasible allocation.

    With positive rate floors, the two-way operating point is the best
    weighted-sum point that still meets both floors, if one exists; otherwise
    the ``split_weights`` point is used.
    """
    h = hop_rates_from_arrays(inst.channels.array, roles, p1, p2)
    per_mode = rates_from_hops(h, split_weights)
    if inst.r_a > 0 or inst.r_b > 0:
        other_a = per_mode[("A", "direct")] + per_mode[("A", "one-way")]
        other_b = per_mode[("B", "direct")] + per_mode[("B", "one-way")]
        point = two_way_split(h.c1_a, h.c1_b, h.c1_ab, h.c2_a, h.c2_b, inst.weights,
                              floors=(inst.r_a - other_a, inst.r_b - other_b))
        if point is not None:
            per_mode[("A", "two-way")], per_mode[("B", "two-way")] = point
    ra, rb = user_totals(per_mode)
    obj = inst.w_a * ra + inst.w_b * rb
    return Candidate(roles, p1, p2, per_mode, ra, rb, obj,
                     ra >= inst.r_a and rb >= inst.r_b)


def role_table(gains: np.ndarray, x: np.ndarray, weights, mask: np.ndarray,
               tol: float = 1e-12) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Optimal powers of every role at dual point ``x`` and their contributions.

    Returns
    -------
    power : (8, N) array
        Power of each role's transmitter (A's power for TW1).
    tw1_b : (N,) array
        B's power on TW1.
    contrib : (8, 14, N) array
        Contribution of assigning role ``r`` to subcarrier ``n`` to each of the
        aggregate rate sums and node powers, in ``_AGG`` order.
    profit : (8, N) array
        Profit of each role, ``-inf`` where the mask forbids it.
    """
    gab, gba, gar, gbr, gra, grb = gains
    lb1a, lb1b, lc1a, lc1b, lab, mua, mub, aa, ab, ar = (float(v) for v in x)
    lvl_a, lvl_b = weights[0] + mua, weights[1] + mub
    n = gab.size
    allowed = np.asarray(mask, dtype=bool).any(axis=0)
    power = np.zeros((8, n))
    tw1_b = np.zeros(n)
    contrib = np.zeros((8, len(_AGG), n))
    profit = np.full((8, n), -np.inf)
    single = (
        (Role.DT_A, lvl_a, aa, gab, "direct_a", "pow_a"),
        (Role.DT_B, lvl_b, ab, gba, "direct_b", "pow_b"),
        (Role.OW1_A, lb1a, aa, gar, "b1_a", "pow_a"),
        (Role.OW1_B, lb1b, ab, gbr, "b1_b", "pow_b"),
        (Role.OW2_A, lvl_a - lb1a, ar, grb, "b2_a", "pow_r"),
        (Role.OW2_B, lvl_b - lb1b, ar, gra, "b2_b", "pow_r"),
    )
    for role, level, price, g, rate_row, pow_row in single:
        if not allowed[role]:
            continue
        p = KP._wf(level, price, g)
        power[role] = p
        contrib[role, _ROW[rate_row]] = np.log2(1.0 + p * g)
        contrib[role, _ROW[pow_row]] = p
        profit[role] = level * contrib[role, _ROW[rate_row]] - price * p
    if allowed[Role.TW1]:
        pa, pb = KP.mac_powers(lc1a, lc1b, lab, aa, ab, gar, gbr, tol=tol)
        power[Role.TW1], tw1_b = pa, pb
        c = contrib[Role.TW1]
        c[_ROW["c1_a"]] = np.log2(1.0 + pa * gar)
        c[_ROW["c1_b"]] = np.log2(1.0 + pb * gbr)
        c[_ROW["c1_ab"]] = np.log2(1.0 + pa * gar + pb * gbr)
        c[_ROW["pow_a"]], c[_ROW["pow_b"]] = pa, pb
        profit[Role.TW1] = (lc1a * c[_ROW["c1_a"]] + lc1b * c[_ROW["c1_b"]]
                            + lab * c[_ROW["c1_ab"]] - aa * pa - ab * pb)
    if allowed[Role.TW2]:
        p = KP.bc_powers(lvl_a - lc1a - lab, lvl_b - lc1b - lab, ar, gra, grb)
        power[Role.TW2] = p
        c = contrib[Role.TW2]
        c[_ROW["c2_a"]] = np.log2(1.0 + p * grb)
        c[_ROW["c2_b"]] = np.log2(1.0 + p * gra)
        c[_ROW["pow_r"]] = p
        profit[Role.TW2] = ((lvl_a - lc1a - lab) * c[_ROW["c2_a"]]
                            + (lvl_b - lc1b - lab) * c[_ROW["c2_b"]] - ar * p)
    profit = np.where(np.asarray(mask, dtype=bool).T, profit, -np.inf)
    return power, tw1_b, contrib, profit


def lp_reassign(inst: ProblemInstance, x: np.ndarray, mask: np.ndarray,
                tol: float = 1e-12, max_combos: int = 4096) -> Candidate | None:
    """Reassign roles by a linear program at fixed per-role powers.

    Variables are the fractions ``theta[n, r]`` of subcarrier ``n`` given to role
    ``r`` (at most 1 in total) plus the one-way and two-way end-to-end rates of
    both users.  All rate sums are linear in ``theta`` once the powers are fixed,
    so maximising the weighted sum rate under budgets, hop couplings and rate
    floors is an LP.  A vertex solution has few fractional subcarriers; their
    roles are chosen by enumerating the supports (up to ``max_combos``
    combinations) or by the largest fraction.
    """
    gains = inst.channels.array
    mask = np.asarray(mask, dtype=bool)
    power, tw1_b, contrib, _ = role_table(gains, x, inst.weights, mask, tol)
    n = inst.n
    useful = mask.T & (np.abs(contrib[:, :11]).sum(axis=1) > 0)  # (8, N)
    var_role, var_sc = np.nonzero(useful)
    m = var_role.size
    if m == 0:
        return None
    cols = contrib[var_role, :, var_sc].T  # (14, m)
    n_var = m + 4  # + oA, oB, tA, tB
    oA, oB, tA, tB = m, m + 1, m + 2, m + 3

    rows, cidx, vals, rhs = [], [], [], []

    def add_row(coef_theta, extra, bound):
        r = len(rhs)
        nz = np.flatnonzero(coef_theta)
        rows.extend([r] * nz.size)
        cidx.extend(nz.tolist())
        vals.extend(coef_theta[nz].tolist())
        for j, v in extra:
            rows.append(r)
            cidx.append(j)
            vals.append(v)
        rhs.append(bound)

    R = _ROW
    add_row(-cols[R["b1_a"]], [(oA, 1.0)], 0.0)
    add_row(-cols[R["b2_a"]], [(oA, 1.0)], 0.0)
    add_row(-cols[R["b1_b"]], [(oB, 1.0)], 0.0)
    add_row(-cols[R["b2_b"]], [(oB, 1.0)], 0.0)
    add_row(-cols[R["c1_a"]], [(tA, 1.0)], 0.0)
    add_row(-cols[R["c2_a"]], [(tA, 1.0)], 0.0)
    add_row(-cols[R["c1_b"]], [(tB, 1.0)], 0.0)
    add_row(-cols[R["c2_b"]], [(tB, 1.0)], 0.0)
    add_row(-cols[R["c1_ab"]], [(tA, 1.0), (tB, 1.0)], 0.0)
    for row, budget in zip(("pow_a", "pow_b", "pow_r"), inst.budgets):
        add_row(cols[R[row]], [], budget)
    if inst.r_a > 0:
        add_row(-cols[R["direct_a"]], [(oA, -1.0), (tA, -1.0)], -inst.r_a)
    if inst.r_b > 0:
        add_row(-cols[R["direct_b"]], [(oB, -1.0), (tB, -1.0)], -inst.r_b)
    base = len(rhs)
    # one role per subcarrier
    rows.extend((base + var_sc).tolist())
    cidx.extend(range(m))
    vals.extend([1.0] * m)
    rhs.extend([1.0] * n)

    a_ub = coo_matrix((vals, (rows, cidx)), shape=(len(rhs), n_var)).tocsr()
    c = np.zeros(n_var)
    wa, wb = inst.weights
    c[:m] = -(wa * cols[R["direct_a"]] + wb * cols[R["direct_b"]])
    c[[oA, tA]] = -wa
    c[[oB, tB]] = -wb
    res = linprog(c, A_ub=a_ub, b_ub=np.array(rhs), bounds=(0.0, None), method="highs")
    if res.status != 0:
        return None
    theta = np.zeros((8, n))
    theta[var_role, var_sc] = np.clip(res.x[:m], 0.0, 1.0)

    busy = theta.sum(axis=0)
    roles = np.where(busy > 0.5, np.argmax(theta, axis=0), Role.IDLE).astype(np.int8)
    frac = np.flatnonzero(((theta > 1e-9) & (theta < 1 - 1e-9)).any(axis=0))
    options = []
    for sc in frac:
        opts = [int(r) for r in np.flatnonzero(theta[:, sc] > 1e-9)]
        if busy[sc] < 1 - 1e-9:
            opts.append(int(Role.IDLE))
        options.append(opts)

    def build(assign):
        r = roles.copy()
        for sc, role in zip(frac, assign):
            r[sc] = role
        busy_sc = r < Role.IDLE
        p1 = np.zeros(n)
        p1[busy_sc] = power[r[busy_sc], np.flatnonzero(busy_sc)]
        p2 = np.where(r == Role.TW1, tw1_b, 0.0)
        p1, p2 = scale_to_budgets(r, p1, p2, inst.budgets)
        return evaluate_candidate(inst, r, p1, p2, inst.weights)

    combos = math.prod(len(o) for o in options) if options else 1
    if combos <= max_combos:
        best = None
        for assign in itertools.product(*options):
            cand = build(assign)
            if best is None or cand.key() > best.key():
                best = cand
        return best
    return build([int(np.argmax(theta[:, sc])) if busy[sc] >= 0.5 else int(Role.IDLE)
                  for sc in frac])


_HOP_PAIRS = ((Role.OW1_A, Role.OW2_A), (Role.OW1_B, Role.OW2_B), (Role.TW1, Role.TW2))


def has_unmatched_hop(roles) -> bool:
    """True if some relaying first hop lacks its second hop or vice versa."""
    present = set(np.asarray(roles).tolist())
    return any((a in present) != (b in present) for a, b in _HOP_PAIRS)


def near_tie_patterns(inst: ProblemInstance, x: np.ndarray, mask: np.ndarray,
                      rel: float = 0.5, limit: int = 12, max_enum: int = 20000,
                      tol: float = 1e-12) -> list[np.ndarray]:
    """Assignments built from roles whose profit is close to the best.

    On each subcarrier the roles with positive profit at least ``(1 - rel)``
    times the largest are kept; their combinations without unmatched hops are
    ranked by total profit and the best ``limit`` returned.  Small instances
    have a real duality gap, and the best assignment is usually among these
    near-ties of the dual optimum.
    """
    _, _, _, profit = role_table(inst.channels.array, x, inst.weights, mask, tol)
    top = profit.max(axis=0)
    options = []
    for n in range(inst.n):
        if not top[n] > 0:
            options.append([(int(Role.IDLE), 0.0)])
            continue
        keep = np.flatnonzero(profit[:, n] >= (1.0 - rel) * top[n])
        keep = keep[np.argsort(-profit[keep, n], kind="stable")]
        options.append([(int(r), float(profit[r, n])) for r in keep])
    if math.prod(len(o) for o in options) > max_enum:
        options = [o[:2] for o in options]
        if math.prod(len(o) for o in options) > max_enum:
            return []
    scored = []
    for combo in itertools.product(*options):
        roles = np.array([r for r, _ in combo], dtype=np.int8)
        if has_unmatched_hop(roles):
            continue
        scored.append((-math.fsum(v for _, v in combo), roles.tobytes(), roles))
    scored.sort(key=lambda t: (t[0], t[1]))
    return [roles for _, _, roles in scored[:limit]]
