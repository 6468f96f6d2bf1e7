"""Per-subcarrier power allocations and profits at a fixed dual point.

Each routine maximises ``level * log2(1 + p * gain) - price * p`` or one of its
two-variable relatives over non-negative powers.  These scalar versions are
the reference implementation; :mod:`bidirelay.kernels` evaluates the same
formulas over whole subcarrier arrays.
"""

from __future__ import annotations

import math
from typing import NamedTuple

from ..errors import NoConvergence, NonPositivePrice
from ..types import ACTIVE_ROLES, DualPoint, ProblemInstance, Role

SIGMA = math.log(2.0)


class ProfitVector(NamedTuple):
    """Profits of the eight active roles, in tie-break order."""

    dt_a: float
    dt_b: float
    ow1_a: float
    ow1_b: float
    ow2_a: float
    ow2_b: float
    tw1: float
    tw2: float


class InnerPowers(NamedTuple):
    dt_a: float
    dt_b: float
    ow1_a: float
    ow1_b: float
    ow2_a: float
    ow2_b: float
    tw1: tuple[float, float]
    tw2: float


def _check_price(price: float) -> None:
    if not price > 0:
        raise NonPositivePrice(f"power price must be > 0, got {price}")


def waterfill_direct(level_num: float, price: float, gain: float) -> float:
    """Water-filling power ``(level/(ln2 * price) - 1/gain)^+``."""
    _check_price(price)
    if gain <= 0 or level_num <= 0:
        return 0.0
    return max(level_num / (SIGMA * price) - 1.0 / gain, 0.0)


def waterfill_oneway_hop1(lam_b1: float, alpha: float, gain: float) -> float:
    return waterfill_direct(lam_b1, alpha, gain)


def waterfill_oneway_hop2(lam_b2: float, alpha_r: float, gain: float) -> float:
    return waterfill_direct(lam_b2, alpha_r, gain)


def mac_objective(pa: float, pb: float, lam_a: float, lam_b: float, lam_ab: float,
                  alpha_a: float, alpha_b: float, ga: float, gb: float) -> float:
    """Two-way first-hop profit for the power pair ``(pa, pb)``."""
    return (lam_a * math.log2(1.0 + pa * ga) + lam_b * math.log2(1.0 + pb * gb)
            + lam_ab * math.log2(1.0 + pa * ga + pb * gb) - alpha_a * pa - alpha_b * pb)


def mac_residual(pa: float, pb: float, lam_a: float, lam_b: float, lam_ab: float,
                 alpha_a: float, alpha_b: float, ga: float, gb: float) -> tuple[float, float]:
    """Left minus right side of both stationarity equations."""
    s = 1.0 + pa * ga + pb * gb
    ra = lam_a * ga / (1.0 + pa * ga) + lam_ab * ga / s - SIGMA * alpha_a
    rb = lam_b * gb / (1.0 + pb * gb) + lam_ab * gb / s - SIGMA * alpha_b
    return ra, rb


def solve_mac_powers(lam_c1_a: float, lam_c1_b: float, lam_ab: float,
                     alpha_a: float, alpha_b: float, gain_a: float, gain_b: float,
                     tol: float = 1e-12, max_iter: int = 100) -> tuple[float, float]:
    """Maximise the two-way first-hop profit over ``p_a, p_b >= 0``.

    Boundary solutions (one user silent) reduce to water-filling with the
    combined level ``lam_c1_k + lam_ab``; they are accepted when the silent
    user's marginal value does not exceed its price.  Otherwise both powers are
    positive and the stationarity system is solved by damped Newton steps kept
    inside the box ``[wf(lam_c1_k), wf(lam_c1_k + lam_ab)]``, which brackets
    the interior solution.
    """
    _check_price(alpha_a)
    _check_price(alpha_b)
    la, lb, lab, ga, gb = lam_c1_a, lam_c1_b, lam_ab, gain_a, gain_b

    pa1 = waterfill_direct(la + lab, alpha_a, ga)
    if (lb + lab / (1.0 + pa1 * ga)) * gb <= SIGMA * alpha_b:
        return pa1, 0.0
    pb1 = waterfill_direct(lb + lab, alpha_b, gb)
    if (la + lab / (1.0 + pb1 * gb)) * ga <= SIGMA * alpha_a:
        return 0.0, pb1

    lo = (waterfill_direct(la, alpha_a, ga), waterfill_direct(lb, alpha_b, gb))
    hi = (pa1, pb1)
    pa = lo[0] if lo[0] > 0 else 0.5 * hi[0]
    pb = lo[1] if lo[1] > 0 else 0.5 * hi[1]
    args = (la, lb, lab, alpha_a, alpha_b, ga, gb)
    scale = max(1.0, SIGMA * alpha_a, SIGMA * alpha_b)
    for _ in range(max_iter):
        ra, rb = mac_residual(pa, pb, *args)
        if max(abs(ra), abs(rb)) <= tol * scale:
            return pa, pb
        xa, xb = 1.0 + pa * ga, 1.0 + pb * gb
        s = xa + xb - 1.0
        haa = -(la * ga * ga / (xa * xa) + lab * ga * ga / (s * s))
        hbb = -(lb * gb * gb / (xb * xb) + lab * gb * gb / (s * s))
        hab = -lab * ga * gb / (s * s)
        det = haa * hbb - hab * hab
        if det > 0:
            da = -(hbb * ra - hab * rb) / det
            db = -(haa * rb - hab * ra) / det
        else:
            da, db = ra, rb
        f0 = mac_objective(pa, pb, *args)
        r0 = max(abs(ra), abs(rb))
        t = 1.0
        for _ in range(60):
            na = min(max(pa + t * da, lo[0]), hi[0])
            nb = min(max(pb + t * db, lo[1]), hi[1])
            # residual is ln2 times the gradient of the objective; near the
            # optimum objective differences drown in rounding, so a step that
            # shrinks the residual is accepted as well
            if mac_objective(na, nb, *args) >= f0 + 1e-4 * ((na - pa) * ra + (nb - pb) * rb) / SIGMA:
                break
            if max(map(abs, mac_residual(na, nb, *args))) < r0:
                break
            t *= 0.5
        if na == pa and nb == pb:
            ra, rb = mac_residual(pa, pb, *args)
            if max(abs(ra), abs(rb)) <= 1e-9 * scale:
                return pa, pb
            break
        pa, pb = na, nb
    raise NoConvergence(
        f"MAC stationarity system not solved: lam=({la}, {lb}, {lab}), "
        f"alpha=({alpha_a}, {alpha_b}), gains=({ga}, {gb})")


def bc_objective(p: float, xi_a: float, xi_b: float, alpha_r: float,
                 gain_ra: float, gain_rb: float) -> float:
    # user A's data reaches B over R->B, and vice versa
    return xi_a * math.log2(1.0 + p * gain_rb) + xi_b * math.log2(1.0 + p * gain_ra) - alpha_r * p


def bc_power(xi_a: float, xi_b: float, alpha_r: float, gain_ra: float, gain_rb: float) -> float:
    """Relay power on a two-way second-hop subcarrier.

    Zero when the relay's price is at least the marginal value at zero power;
    otherwise the positive root of the quadratic stationarity condition.
    """
    _check_price(alpha_r)
    marginal = (xi_b * gain_ra + xi_a * gain_rb) / SIGMA
    if alpha_r >= marginal:
        return 0.0
    phi1 = alpha_r * gain_rb * gain_ra
    phi2 = alpha_r * (gain_rb + gain_ra) - (xi_a + xi_b) * gain_rb * gain_ra / SIGMA
    phi3 = alpha_r - marginal
    # (-phi2 + sqrt(D)) / (2 phi1) rewritten to avoid cancellation; phi3 < 0 here
    return -2.0 * phi3 / (phi2 + math.sqrt(phi2 * phi2 - 4.0 * phi1 * phi3))


def _link_gains(inst: ProblemInstance, n: int) -> dict[str, float]:
    ch = inst.channels
    return {link: float(ch.gain(link)[n]) for link in ("AB", "BA", "AR", "BR", "RA", "RB")}


def inner_solution(n: int, dual: DualPoint, inst: ProblemInstance,
                   roles=ACTIVE_ROLES) -> tuple[ProfitVector, InnerPowers]:
    """Optimal inner powers and the resulting profits on subcarrier ``n``.

    Roles outside ``roles`` get profit ``-inf`` and zero power.
    """
    g = _link_gains(inst, n)
    d = dual
    lvl_a, lvl_b = d.level("a"), d.level("b")
    allowed = {Role(r) for r in roles}
    profits = [-math.inf] * 8
    powers: list = [0.0] * 6 + [(0.0, 0.0), 0.0]

    def single(role, level, price, gain):
        if role in allowed:
            p = waterfill_direct(level, price, gain)
            powers[role] = p
            profits[role] = level * math.log2(1.0 + p * gain) - price * p

    single(Role.DT_A, lvl_a, d.alpha_a, g["AB"])
    single(Role.DT_B, lvl_b, d.alpha_b, g["BA"])
    single(Role.OW1_A, d.lam_b1_a, d.alpha_a, g["AR"])
    single(Role.OW1_B, d.lam_b1_b, d.alpha_b, g["BR"])
    single(Role.OW2_A, d.lam_b2("a"), d.alpha_r, g["RB"])
    single(Role.OW2_B, d.lam_b2("b"), d.alpha_r, g["RA"])
    if Role.TW1 in allowed:
        pa, pb = solve_mac_powers(d.lam_c1_a, d.lam_c1_b, d.lam_ab_c,
                                  d.alpha_a, d.alpha_b, g["AR"], g["BR"])
        powers[Role.TW1] = (pa, pb)
        profits[Role.TW1] = mac_objective(pa, pb, d.lam_c1_a, d.lam_c1_b, d.lam_ab_c,
                                          d.alpha_a, d.alpha_b, g["AR"], g["BR"])
    if Role.TW2 in allowed:
        p = bc_power(d.xi("a"), d.xi("b"), d.alpha_r, g["RA"], g["RB"])
        powers[Role.TW2] = p
        profits[Role.TW2] = bc_objective(p, d.xi("a"), d.xi("b"), d.alpha_r, g["RA"], g["RB"])
    return ProfitVector(*profits), InnerPowers(*powers)


def compute_profits(n: int, dual: DualPoint, inst: ProblemInstance) -> ProfitVector:
    """Profits of all eight roles on subcarrier ``n``."""
    return inner_solution(n, dual, inst)[0]


def assign_subcarrier(profits) -> Role:
    """Role with the largest profit; lowest index wins ties; IDLE if none is positive."""
    best, best_role = 0.0, Role.IDLE
    for role, value in zip(ACTIVE_ROLES, profits):
        if value > best:
            best, best_role = value, role
    return best_role
