"""Dual ellipsoid solver with primal recovery and outage declaration.

The dual function is minimised over the multipliers by central-cut ellipsoid
steps.  At a feasible centre the inner maximisation (per-subcarrier powers and
profit argmax) gives both the dual value and a subgradient; an infeasible
centre is cut with the gradient of its most violated multiplier constraint.
After the loop, an allocation is recovered from the best dual point, scaled
into the power budgets and checked against the rate floors.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .. import kernels as K
from ..errors import IterationCapExceeded
from ..types import ACTIVE_ROLES, Allocation, DualPoint, ProblemInstance, Role, SolveOutcome, \
    validate_instance
from .ellipsoid import central_cut_factor
from .rates import HopRates
from .recovery import Candidate, evaluate_candidate, has_unmatched_hop, lp_reassign, \
    near_tie_patterns, scale_to_budgets

SIGMA = math.log(2.0)

# positions in the canonical 10-vector of multipliers
I_LB1_A, I_LB1_B, I_LC1_A, I_LC1_B, I_LAB, I_MU_A, I_MU_B, I_AL_A, I_AL_B, I_AL_R = range(10)
ALPHAS = (I_AL_A, I_AL_B, I_AL_R)

SCHEME_ROLES = {
    "proposed": ACTIVE_ROLES,
    "BM2": ACTIVE_ROLES[:6],
    "BM1": ACTIVE_ROLES[:2],
}


@dataclass(frozen=True)
class SolverOptions:
    """Knobs of :func:`solve`.

    Attributes
    ----------
    stop_tol : float
        Stop when ``sqrt(delta^T P delta)`` at a feasible centre drops below this.
    iter_cap : int
        Maximum number of ellipsoid steps.
    alpha_min : float
        Lower bound on the power prices kept by constraint cuts.
    mu_ceiling : float
        A rate-floor multiplier above this declares the floors unreachable.
    mac_newton_tol : float
        Relative stationarity tolerance of the two-way first-hop Newton solve.
    oracle_check : bool
        Re-derive the inner powers at the final dual point with generic
        numerical maximisation and record the largest discrepancy.
    roles : tuple of int
        Roles the scheme may use; multipliers of unused constraints are fixed at 0.
    radius_scale : float
        Initial ellipsoid radius is this times ``max(1, w_A, w_B, initial prices)``.
    polish : {"auto", "always", "never"}
        Re-solve powers for fixed candidate assignments after the dual loop.
        ``"auto"`` does so for small instances and when the rate floors fail.
    polish_max_n : int
        Instances with at most this many subcarriers are polished under ``"auto"``.
    search_max_n, search_beam : int
        Up to ``search_max_n`` subcarriers, polishing continues with a beam
        search over single role changes and swaps, expanding the best
        ``search_beam`` assignments per round.
    history : int
        Number of recent feasible centres whose assignments are polish candidates.
    max_candidates : int
        Cap on distinct candidate assignments.
    strict : bool
        Raise :class:`IterationCapExceeded` instead of flagging the outcome.
    backend : str or None
        Inner kernel backend, see :mod:`bidirelay.kernels`.
    """

    stop_tol: float = 1e-4
    iter_cap: int = 5000
    alpha_min: float = 1e-8
    mu_ceiling: float = 1e6
    mac_newton_tol: float = 1e-12
    oracle_check: bool = False
    roles: tuple = ACTIVE_ROLES
    radius_scale: float = 10.0
    polish: str = "auto"
    polish_max_n: int = 16
    search_max_n: int = 6
    search_beam: int = 3
    history: int = 64
    max_candidates: int = 12
    strict: bool = False
    backend: str | None = None

    def __post_init__(self):
        if not self.stop_tol > 0 or self.iter_cap < 1 or not self.alpha_min > 0:
            raise ValueError("stop_tol, iter_cap and alpha_min must be positive")
        if self.polish not in ("auto", "always", "never"):
            raise ValueError(f"unknown polish mode {self.polish!r}")
        object.__setattr__(self, "roles", tuple(int(r) for r in self.roles))

    @classmethod
    def for_scheme(cls, scheme: str, **kw) -> "SolverOptions":
        try:
            roles = SCHEME_ROLES[scheme]
        except KeyError:
            raise ValueError(f"unknown scheme {scheme!r}; expected one of {sorted(SCHEME_ROLES)}")
        return cls(roles=roles, **kw)


def active_coordinates(roles) -> tuple[int, ...]:
    """Multipliers that matter when only ``roles`` may be assigned.

    ``roles`` is a collection of role codes or an ``(N, 8)`` role mask.
    """
    arr = np.asarray(roles)
    if arr.ndim == 2:
        roles = set(np.flatnonzero(arr.any(axis=0)).tolist())
    else:
        roles = set(arr.ravel().tolist())
    one_way = roles & {Role.OW1_A, Role.OW1_B, Role.OW2_A, Role.OW2_B}
    two_way = roles & {Role.TW1, Role.TW2}
    idx = [I_MU_A, I_MU_B, I_AL_A, I_AL_B]
    if one_way:
        idx += [I_LB1_A, I_LB1_B]
    if two_way:
        idx += [I_LC1_A, I_LC1_B, I_LAB]
    if one_way or two_way:
        idx.append(I_AL_R)
    return tuple(sorted(idx))


# ---------------------------------------------------------------------------
# dual function pieces


def subgradient_from_sums(sums: np.ndarray, inst: ProblemInstance) -> np.ndarray:
    """Dual subgradient from the aggregate sums returned by the inner kernel."""
    s = sums
    d = np.empty(10)
    d[I_LB1_A] = s[K.S_B1_A] - s[K.S_B2_A]
    d[I_LB1_B] = s[K.S_B1_B] - s[K.S_B2_B]
    d[I_LC1_A] = s[K.S_C1_A] - s[K.S_C2_A]
    d[I_LC1_B] = s[K.S_C1_B] - s[K.S_C2_B]
    d[I_LAB] = s[K.S_C1_AB] - s[K.S_C2_A] - s[K.S_C2_B]
    d[I_MU_A] = s[K.S_DIRECT_A] + s[K.S_B2_A] + s[K.S_C2_A] - inst.r_a
    d[I_MU_B] = s[K.S_DIRECT_B] + s[K.S_B2_B] + s[K.S_C2_B] - inst.r_b
    d[I_AL_A] = inst.p_a - s[K.S_POWER_A]
    d[I_AL_B] = inst.p_b - s[K.S_POWER_B]
    d[I_AL_R] = inst.p_r - s[K.S_POWER_R]
    return d


def subgradient(dual: DualPoint, inst: ProblemInstance, alloc: Allocation,
                rates: HopRates) -> np.ndarray:
    """Subgradient of the dual function at ``dual``.

    ``alloc`` and ``rates`` must be the inner maximiser at ``dual``; the
    multipliers themselves do not enter the formula.
    """
    used = alloc.node_power_used
    h = rates
    sums = np.zeros(K.N_SUMS)
    sums[K.S_DIRECT_A], sums[K.S_DIRECT_B] = h.direct_a, h.direct_b
    sums[K.S_B1_A], sums[K.S_B1_B], sums[K.S_B2_A], sums[K.S_B2_B] = h.b1_a, h.b1_b, h.b2_a, h.b2_b
    sums[K.S_C1_A], sums[K.S_C1_B], sums[K.S_C1_AB] = h.c1_a, h.c1_b, h.c1_ab
    sums[K.S_C2_A], sums[K.S_C2_B] = h.c2_a, h.c2_b
    sums[K.S_POWER_A], sums[K.S_POWER_B], sums[K.S_POWER_R] = used["A"], used["B"], used["R"]
    return subgradient_from_sums(sums, inst)


def dual_value_from_sums(sums: np.ndarray, x: np.ndarray, inst: ProblemInstance) -> float:
    return (float(sums[K.S_PROFIT]) + x[I_AL_A] * inst.p_a + x[I_AL_B] * inst.p_b
            + x[I_AL_R] * inst.p_r - x[I_MU_A] * inst.r_a - x[I_MU_B] * inst.r_b)


def dual_function(dual: DualPoint | np.ndarray, inst: ProblemInstance, roles=ACTIVE_ROLES,
                  backend: str | None = None) -> tuple[float, np.ndarray]:
    """Dual value and a subgradient at a feasible dual point."""
    if isinstance(dual, DualPoint):
        x = dual.as_vector()
    else:
        x = np.asarray(dual, dtype=np.float64)
        DualPoint.from_vector(x, inst.w_a, inst.w_b)  # invariant check
    mask = K.role_mask(roles, inst.n)
    _, _, _, sums = K.inner_maximize(inst.channels.array, x, inst.weights, mask, backend)
    return dual_value_from_sums(sums, x, inst), subgradient_from_sums(sums, inst)


def _most_violated(x: np.ndarray, weights, active: tuple[int, ...], alpha_min: float):
    """Gradient of the most violated multiplier constraint, or ``None``."""
    worst, grad = 0.0, None
    for i in active:
        floor = alpha_min if i in ALPHAS else 0.0
        if floor - x[i] > worst:
            worst, grad = floor - x[i], -np.eye(10)[i]
    bounds = []
    if I_LB1_A in active:
        bounds += [((I_LB1_A,), I_MU_A, weights[0]), ((I_LB1_B,), I_MU_B, weights[1])]
    if I_LAB in active:
        bounds += [((I_LC1_A, I_LAB), I_MU_A, weights[0]), ((I_LC1_B, I_LAB), I_MU_B, weights[1])]
    for idx, mu, w in bounds:
        excess = sum(x[i] for i in idx) - x[mu] - w
        if excess > worst:
            worst = excess
            grad = np.zeros(10)
            grad[list(idx)] = 1.0
            grad[mu] = -1.0
    return grad


def initial_center(inst: ProblemInstance, alpha_min: float = 1e-8) -> np.ndarray:
    """Starting multipliers.

    Prices are set so that water-filling on a flat channel at each node's mean
    transmit gain spends the budget exactly over all subcarriers.
    """
    wa, wb = inst.weights
    g = inst.channels.array
    n = inst.n
    mean_w = 0.5 * (wa + wb)
    x = np.zeros(10)
    x[I_LB1_A], x[I_LB1_B] = wa / 2, wb / 2
    x[I_LC1_A], x[I_LC1_B] = wa / 3, wb / 3
    x[I_LAB] = min(wa, wb) / 3
    for i, level, budget, links in (
            (I_AL_A, wa or mean_w, inst.p_a, (0, 2)),
            (I_AL_B, wb or mean_w, inst.p_b, (1, 3)),
            (I_AL_R, mean_w, inst.p_r, (4, 5))):
        gbar = float(g[list(links)].mean())
        floor = 1.0 / gbar if gbar > 0 else 0.0
        x[i] = max(level / (SIGMA * (budget / n + floor)), alpha_min)
    return x


# ---------------------------------------------------------------------------
# the ellipsoid loop


@dataclass
class DualRun:
    """Raw result of the dual iteration."""

    best_x: np.ndarray | None
    best_value: float
    last_x: np.ndarray
    iterations: int
    status: str
    width: float
    values: np.ndarray
    recent: list = field(default_factory=list)


def run_dual(inst: ProblemInstance, mask: np.ndarray, opts: SolverOptions,
             certificate: float | None = None) -> DualRun:
    """Minimise the dual function by central-cut ellipsoid steps.

    Parameters
    ----------
    mask : (N, 8) uint8 array
        Allowed roles per subcarrier.
    certificate : float, optional
        Stop as soon as a dual value falls below this; with the default
        ``w_A r_A + w_B r_B`` that proves the rate floors unreachable.
    """
    active = active_coordinates(np.asarray(mask))
    sel = np.array(active)
    if certificate is None and (inst.r_a > 0 or inst.r_b > 0):
        certificate = inst.w_a * inst.r_a + inst.w_b * inst.r_b
    gains = inst.channels.array
    weights = np.array(inst.weights)
    x = np.zeros(10)
    x0 = initial_center(inst, opts.alpha_min)
    x[sel] = x0[sel]
    radius = opts.radius_scale * max(1.0, *inst.weights, *x0[list(ALPHAS)])
    center = x[sel].copy()
    factor = radius * np.eye(sel.size)  # shape matrix is factor @ factor.T

    best_x, best_val = None, math.inf
    values = []
    recent = deque(maxlen=max(opts.history, 1))
    status, width = "iteration_cap", math.inf
    it = 0
    for it in range(1, opts.iter_cap + 1):
        x[sel] = center
        grad = _most_violated(x, weights, active, opts.alpha_min)
        if grad is None:
            _, _, _, sums = K.inner_maximize(gains, x, weights, mask, opts.backend,
                                             opts.mac_newton_tol)
            val = dual_value_from_sums(sums, x, inst)
            values.append(val)
            recent.append(x.copy())
            if val < best_val:
                best_val, best_x = val, x.copy()
            if certificate is not None and val < certificate:
                status = "infeasible"
                break
            if max(x[I_MU_A], x[I_MU_B]) > opts.mu_ceiling:
                status = "mu_ceiling"
                break
            cut = subgradient_from_sums(sums, inst)[sel]
            v = factor.T @ cut
            width = math.sqrt(float(v @ v))
            if width < opts.stop_tol:
                status = "converged"
                break
        else:
            cut = grad[sel]
        step = central_cut_factor(center, factor, cut)
        if step is None:
            status = "degenerate"
            break
        center, factor = step
    x[sel] = center
    return DualRun(best_x, best_val, x.copy(), it, status, width, np.array(values), list(recent))


# ---------------------------------------------------------------------------
# primal recovery


def _recover_at(inst: ProblemInstance, x: np.ndarray, mask: np.ndarray,
                opts: SolverOptions) -> Candidate:
    roles, p1, p2, _ = K.inner_maximize(inst.channels.array, x, inst.weights, mask,
                                        opts.backend, opts.mac_newton_tol)
    p1, p2 = scale_to_budgets(roles, p1, p2, inst.budgets)
    split = (inst.w_a + x[I_MU_A], inst.w_b + x[I_MU_B])
    return evaluate_candidate(inst, roles, p1, p2, split)


def _pattern_mask(roles: np.ndarray) -> np.ndarray:
    m = np.zeros((roles.size, 8), dtype=np.uint8)
    busy = roles < Role.IDLE
    m[np.flatnonzero(busy), roles[busy]] = 1
    return m


def _polish(inst: ProblemInstance, pattern: np.ndarray, opts: SolverOptions,
            margin: float = 0.0) -> Candidate | None:
    """Optimal powers for a fixed assignment, via the same dual machinery."""
    if not (pattern < Role.IDLE).any():
        return None
    mask = _pattern_mask(pattern)
    target = inst if margin == 0 else inst.replace(r_a=inst.r_a * (1 + margin) + margin,
                                                   r_b=inst.r_b * (1 + margin) + margin)
    run = run_dual(target, mask, opts)
    if run.best_x is None:
        return None
    return _recover_at(inst, run.best_x, mask, opts)


def _candidate_patterns(inst, run: DualRun, mask, opts) -> list[np.ndarray]:
    seen, out = set(), []
    for x in reversed(run.recent):
        roles = K.inner_maximize(inst.channels.array, x, inst.weights, mask, opts.backend,
                                 opts.mac_newton_tol)[0]
        key = roles.tobytes()
        if key not in seen:
            seen.add(key)
            out.append(roles)
            if len(out) >= opts.max_candidates:
                break
    return out


def _neighbours(roles: np.ndarray, allowed):
    """Assignments one role change or one swap of two subcarriers away."""
    n = roles.size
    for i in range(n):
        for role in allowed[i]:
            if role != roles[i]:
                out = roles.copy()
                out[i] = role
                yield out
    for i in range(n):
        for j in range(i + 1, n):
            if roles[i] != roles[j] and roles[j] in allowed[i] and roles[i] in allowed[j]:
                out = roles.copy()
                out[i], out[j] = roles[j], roles[i]
                yield out


def _beam_search(inst: ProblemInstance, start: Candidate, mask: np.ndarray,
                 opts: SolverOptions) -> Candidate:
    """Improve a small instance's assignment by local role changes.

    Every assignment visited is polished.  Each round expands the best few
    assignments not yet expanded; the search ends after two rounds without
    improvement, so a worse intermediate step can still lead somewhere better.
    """
    allowed = [np.append(np.flatnonzero(mask[n]), Role.IDLE).astype(np.int8)
               for n in range(inst.n)]
    scored = {start.roles.tobytes(): start}
    expanded = set()
    best, stale = start, 0
    while stale < 2:
        frontier = sorted((c for k, c in scored.items() if k not in expanded),
                          key=lambda c: (c.key(), c.roles.tobytes()), reverse=True)
        frontier = frontier[:opts.search_beam]
        if not frontier:
            break
        improved = False
        for cand in frontier:
            expanded.add(cand.roles.tobytes())
            for roles in _neighbours(cand.roles, allowed):
                key = roles.tobytes()
                if key in scored or has_unmatched_hop(roles):
                    continue
                new = _polish(inst, roles, opts)
                if new is None:
                    zero = np.zeros(inst.n)
                    new = evaluate_candidate(inst, roles, zero, zero, inst.weights)
                scored[key] = new
                if new.key() > best.key():
                    best, improved = new, True
        stale = 0 if improved else stale + 1
    return best


def solve(inst: ProblemInstance, opts: SolverOptions | None = None) -> SolveOutcome:
    """Run the dual ellipsoid method and recover a feasible allocation.

    Returns
    -------
    SolveOutcome
        ``outcome.status`` is ``"converged"``, ``"iteration_cap"``,
        ``"infeasible"`` (a dual value certified the rate floors unreachable)
        or ``"mu_ceiling"``.
    """
    opts = opts or SolverOptions()
    inst = validate_instance(inst)
    mask = K.role_mask(opts.roles, inst.n)
    run = run_dual(inst, mask, opts)
    if run.status == "iteration_cap" and opts.strict:
        raise IterationCapExceeded(f"no convergence in {opts.iter_cap} iterations "
                                   f"(width {run.width:.3g})")
    x = run.best_x if run.best_x is not None else run.last_x

    if run.best_x is None:
        zero = np.zeros(inst.n)
        best = evaluate_candidate(inst, np.full(inst.n, Role.IDLE, dtype=np.int8), zero, zero,
                                  inst.weights)
    else:
        best = _recover_at(inst, x, mask, opts)
        lp = lp_reassign(inst, x, mask, opts.mac_newton_tol)
        if lp is not None and lp.key() > best.key():
            best = lp
        want = opts.polish == "always" or (
            opts.polish == "auto" and (inst.n <= opts.polish_max_n or not best.meets_qos))
        if want and run.status != "infeasible":
            if inst.n > opts.polish_max_n and opts.polish == "auto":
                patterns = [best.roles]
            else:
                patterns = [best.roles] + near_tie_patterns(
                    inst, x, mask, limit=opts.max_candidates, tol=opts.mac_newton_tol) \
                    + _candidate_patterns(inst, run, mask, opts)
            margins = (0.0,) if best.meets_qos else (0.0, 1e-3)
            tried = set()
            for pattern in patterns:
                if pattern.tobytes() in tried:
                    continue
                tried.add(pattern.tobytes())
                for margin in margins:
                    cand = _polish(inst, pattern, opts, margin)
                    if cand is not None and cand.key() > best.key():
                        best = cand
                    if cand is not None and cand.meets_qos:
                        break

        if want and run.status != "infeasible" and inst.n <= opts.search_max_n:
            best = _beam_search(inst, best, mask, opts)

    alloc = Allocation.from_arrays(best.roles, best.p1, best.p2)
    outage = not best.meets_qos
    dual_value = run.best_value
    gap = dual_value - best.objective if not outage else math.nan
    residual = None
    if opts.oracle_check and run.best_x is not None:
        from .verify import inner_oracle_residual
        residual = inner_oracle_residual(inst, x, mask)
    return SolveOutcome(
        rate_a=0.0 if outage else best.rate_a,
        rate_b=0.0 if outage else best.rate_b,
        per_mode_rates=best.per_mode,
        objective=0.0 if outage else best.objective,
        outage=outage,
        iterations=run.iterations,
        dual_value=dual_value,
        gap_estimate=gap,
        allocation=alloc,
        primal_objective=best.objective,
        converged=run.status == "converged",
        status=run.status,
        dual_point=x.copy(),
        pre_outage_rates=(best.rate_a, best.rate_b),
        oracle_residual=residual,
    )
