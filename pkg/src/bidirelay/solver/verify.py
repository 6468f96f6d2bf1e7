"""Numerical cross-checks for the per-subcarrier power routines.

The closed forms and the Newton iteration are compared against generic
maximisers that know nothing about their structure: a bounded scalar search
for the single-power problems and a zooming grid for the two-power first hop.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from ..types import ProblemInstance, Role
from .recovery import role_table

LN2 = math.log(2.0)


def maximize_1d(f, upper: float, df=None, xatol: float = 1e-12) -> tuple[float, float]:
    """Maximiser and maximum of a concave ``f`` on ``[0, upper]``.

    Without ``df``: bounded Brent search, with both end points compared
    explicitly so that boundary optima are found exactly.  Its precision is
    about ``sqrt(eps)`` relative, since near the optimum ``f`` is flat to
    rounding.  With the derivative ``df`` the sign change of ``df`` is bracketed
    instead (Brent root search), which resolves the maximiser to a few ulps.
    """
    if not upper > 0:
        return 0.0, f(0.0)
    if df is not None:
        if df(0.0) <= 0:
            return 0.0, f(0.0)
        if df(upper) >= 0:
            return upper, f(upper)
        p = brentq(df, 0.0, upper, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
        return p, f(p)
    res = minimize_scalar(lambda p: -f(p), bounds=(0.0, upper), method="bounded",
                          options={"xatol": xatol * max(1.0, upper), "maxiter": 2000})
    best = max(((0.0, f(0.0)), (upper, f(upper)), (float(res.x), -float(res.fun))),
               key=lambda t: t[1])
    return best


def grid_max_2d(f, upper_a: float, upper_b: float, points: int = 41,
                resolution: float = 1e-9, vectorized: bool = False) -> tuple[float, float, float]:
    """Maximiser of ``f(pa, pb)`` over a box by repeated grid zooming.

    Each round evaluates a ``points x points`` grid and shrinks the box to
    two cells around the best node, until the spacing drops below
    ``resolution`` (relative to the initial box).  Reliable for concave ``f``.
    With ``vectorized`` the whole grid is passed to ``f`` as two broadcast
    arrays in one call.
    """
    lo = np.array([0.0, 0.0])
    hi = np.array([max(upper_a, 0.0), max(upper_b, 0.0)])
    scale = max(1.0, float(hi.max()))
    best = (0.0, 0.0, f(0.0, 0.0))
    while True:
        ga = np.linspace(lo[0], hi[0], points)
        gb = np.linspace(lo[1], hi[1], points)
        if vectorized:
            vals = np.broadcast_to(f(ga[:, None], gb[None, :]), (points, points))
        else:
            vals = np.array([[f(a, b) for b in gb] for a in ga])
        i, j = np.unravel_index(int(np.argmax(vals)), vals.shape)
        if vals[i, j] >= best[2]:
            best = (float(ga[i]), float(gb[j]), float(vals[i, j]))
        step = (hi - lo) / (points - 1)
        if step.max() <= resolution * scale:
            return best
        centre = np.array([ga[i], gb[j]])
        lo = np.maximum(centre - 2 * step, 0.0)
        hi = np.minimum(centre + 2 * step, np.array([max(upper_a, 0.0), max(upper_b, 0.0)]))


def _log2(x: float) -> float:
    return math.log1p(x) / LN2


def inner_oracle_residual(inst: ProblemInstance, x: np.ndarray, mask: np.ndarray) -> float:
    """Largest profit shortfall of the kernel powers against the generic oracles.

    For every subcarrier and allowed role, the profit at the kernel's power is
    compared with the oracle's maximum; the result is the largest amount by
    which the oracle did better (0 if the kernel is never beaten).
    """
    x = np.asarray(x, dtype=np.float64)
    lb1a, lb1b, lc1a, lc1b, lab, mua, mub, aa, ab, ar = x
    lvl_a, lvl_b = inst.w_a + mua, inst.w_b + mub
    gab, gba, gar, gbr, gra, grb = inst.channels.array
    power, tw1_b, _, _ = role_table(inst.channels.array, x, inst.weights, mask)
    worst = 0.0
    for n in range(inst.n):
        allowed = np.asarray(mask[n], dtype=bool)
        single = (
            (Role.DT_A, lvl_a, aa, gab[n]), (Role.DT_B, lvl_b, ab, gba[n]),
            (Role.OW1_A, lb1a, aa, gar[n]), (Role.OW1_B, lb1b, ab, gbr[n]),
            (Role.OW2_A, lvl_a - lb1a, ar, grb[n]), (Role.OW2_B, lvl_b - lb1b, ar, gra[n]),
        )
        for role, level, price, g in single:
            if not allowed[role]:
                continue
            def f(p, level=level, price=price, g=g):
                return level * _log2(p * g) - price * p

            def df(p, level=level, price=price, g=g):
                return level * g / (LN2 * (1.0 + p * g)) - price
            _, fmax = maximize_1d(f, max(level, 0.0) / (LN2 * price), df)
            worst = max(worst, fmax - f(power[role, n]))
        if allowed[Role.TW1]:
            def h(pa, pb, n=n):
                return (lc1a * np.log1p(pa * gar[n]) + lc1b * np.log1p(pb * gbr[n])
                        + lab * np.log1p(pa * gar[n] + pb * gbr[n])) / LN2 - aa * pa - ab * pb
            *_, hmax = grid_max_2d(h, (lc1a + lab) / (LN2 * aa), (lc1b + lab) / (LN2 * ab),
                                   vectorized=True)
            worst = max(worst, float(hmax - h(power[Role.TW1, n], tw1_b[n])))
        if allowed[Role.TW2]:
            xa, xb = lvl_a - lc1a - lab, lvl_b - lc1b - lab
            def b(p, n=n):
                return xa * _log2(p * grb[n]) + xb * _log2(p * gra[n]) - ar * p

            def db(p, n=n):
                return (xa * grb[n] / (1.0 + p * grb[n]) + xb * gra[n] / (1.0 + p * gra[n])) / LN2 - ar
            _, bmax = maximize_1d(b, max(xa + xb, 0.0) / (LN2 * ar), db)
            worst = max(worst, bmax - b(power[Role.TW2, n]))
    return float(worst)


def coupling_violation(inst: ProblemInstance, outcome) -> float:
    """Largest excess of a reported rate over the hop totals that carry it.

    Checks each user's one-way rate against both hop sums and the two-way
    pair against all five region inequalities.  Zero for a consistent outcome.
    """
    from .rates import hop_rates

    h = hop_rates(outcome.allocation, inst)
    r = outcome.per_mode_rates
    ow_a, ow_b = r[("A", "one-way")], r[("B", "one-way")]
    tw_a, tw_b = r[("A", "two-way")], r[("B", "two-way")]
    excess = (
        ow_a - h.b1_a, ow_a - h.b2_a, ow_b - h.b1_b, ow_b - h.b2_b,
        tw_a - h.c1_a, tw_b - h.c1_b, tw_a + tw_b - h.c1_ab, tw_a - h.c2_a, tw_b - h.c2_b,
        abs(r[("A", "direct")] - h.direct_a), abs(r[("B", "direct")] - h.direct_b),
    )
    return max(0.0, *excess)


def budget_excess(inst: ProblemInstance, outcome) -> float:
    """Largest amount by which a node's exactly summed power exceeds its budget."""
    used = outcome.allocation.node_power_used
    return max(0.0, used["A"] - inst.p_a, used["B"] - inst.p_b, used["R"] - inst.p_r)
