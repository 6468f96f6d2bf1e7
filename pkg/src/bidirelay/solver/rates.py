"""End-to-end rates of an allocation.

Direct rates are plain sums.  One-way relaying delivers the smaller of its two
hop totals.  Two-way relaying delivers a point of the five-inequality region
built from the first-hop (MAC) and second-hop (BC) subcarrier sets; the point
maximising a weighted sum is picked by enumerating the region's vertices.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from itertools import combinations

import numpy as np

from ..types import Allocation, ProblemInstance, Role


@dataclass(frozen=True)
class HopRates:
    """Per-term rate totals over all subcarriers of an allocation."""

    direct_a: float = 0.0
    direct_b: float = 0.0
    b1_a: float = 0.0
    b1_b: float = 0.0
    b2_a: float = 0.0
    b2_b: float = 0.0
    c1_a: float = 0.0
    c1_b: float = 0.0
    c1_ab: float = 0.0
    c2_a: float = 0.0
    c2_b: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, f.name) for f in fields(self)])


def hop_rates_from_arrays(gains: np.ndarray, roles: np.ndarray, p1: np.ndarray,
                          p2: np.ndarray) -> HopRates:
    gab, gba, gar, gbr, gra, grb = gains

    def total(role, gain, power=p1):
        m = roles == role
        return float(np.log2(1.0 + power[m] * gain[m]).sum())

    tw1 = roles == Role.TW1
    return HopRates(
        direct_a=total(Role.DT_A, gab),
        direct_b=total(Role.DT_B, gba),
        b1_a=total(Role.OW1_A, gar),
        b1_b=total(Role.OW1_B, gbr),
        b2_a=total(Role.OW2_A, grb),
        b2_b=total(Role.OW2_B, gra),
        c1_a=total(Role.TW1, gar),
        c1_b=total(Role.TW1, gbr, p2),
        c1_ab=float(np.log2(1.0 + p1[tw1] * gar[tw1] + p2[tw1] * gbr[tw1]).sum()),
        c2_a=total(Role.TW2, grb),
        c2_b=total(Role.TW2, gra),
    )


def hop_rates(alloc: Allocation, inst: ProblemInstance) -> HopRates:
    p1, p2 = alloc.power_arrays()
    return hop_rates_from_arrays(inst.channels.array, alloc.roles(), p1, p2)


def two_way_split(cap_a1: float, cap_b1: float, cap_sum: float, cap_a2: float,
                  cap_b2: float, weights: tuple[float, float],
                  floors: tuple[float, float] | None = None) -> tuple[float, float] | None:
    """Best weighted-sum point ``(R_A, R_B)`` of the two-way rate region.

    The region is ``R_A <= cap_a1, R_B <= cap_b1, R_A + R_B <= cap_sum,
    R_A <= cap_a2, R_B <= cap_b2`` in the non-negative quadrant.  When a whole
    edge is optimal the point on it with the largest ``min(R_A, R_B)`` is
    returned.

    ``floors`` adds ``R_A >= floors[0], R_B >= floors[1]``; the function then
    returns ``None`` if no point of the region meets them.
    """
    ua = max(min(cap_a1, cap_a2), 0.0)
    ub = max(min(cap_b1, cap_b2), 0.0)
    s = max(cap_sum, 0.0)
    wa, wb = weights
    fa, fb = (0.0, 0.0) if floors is None else (max(floors[0], 0.0), max(floors[1], 0.0))
    # a * x <= b rows: RA >= fa, RB >= fb, RA <= ua, RB <= ub, RA + RB <= s
    rows = ((-1.0, 0.0, -fa), (0.0, -1.0, -fb), (1.0, 0.0, ua), (0.0, 1.0, ub), (1.0, 1.0, s))
    tol = 1e-12 * max(1.0, ua, ub, s)
    vertices = []
    for (a1, b1, c1), (a2, b2, c2) in combinations(rows, 2):
        det = a1 * b2 - a2 * b1
        if det == 0:
            continue
        x = (c1 * b2 - c2 * b1) / det
        y = (a1 * c2 - a2 * c1) / det
        if all(a * x + b * y <= c + tol for a, b, c in rows):
            # clip rounding so the point never leaves the region
            x = min(max(x, fa), ua, s)
            y = min(max(y, fb), ub, s - x)
            vertices.append((x, y))
    if not vertices:
        return None
    values = [wa * x + wb * y for x, y in vertices]
    best = max(values)
    vtol = 1e-12 * max(1.0, abs(best))
    optimal = sorted({v for v, val in zip(vertices, values) if val >= best - vtol})
    if len(optimal) == 1:
        return optimal[0]
    # optimal face is the segment between its extreme vertices
    (x0, y0), (x1, y1) = optimal[0], optimal[-1]
    candidates = [0.0, 1.0]
    denom = (x1 - x0) - (y1 - y0)
    if denom != 0:
        t = (y0 - x0) / denom
        if 0.0 < t < 1.0:
            candidates.append(t)
    pts = [(x0 + t * (x1 - x0), y0 + t * (y1 - y0)) for t in candidates]
    return max(pts, key=lambda p: min(p))


def rates_from_hops(h: HopRates, split_weights: tuple[float, float]) -> dict[tuple[str, str], float]:
    ra_c, rb_c = two_way_split(h.c1_a, h.c1_b, h.c1_ab, h.c2_a, h.c2_b, split_weights)
    return {
        ("A", "direct"): h.direct_a,
        ("B", "direct"): h.direct_b,
        ("A", "one-way"): min(h.b1_a, h.b2_a),
        ("B", "one-way"): min(h.b1_b, h.b2_b),
        ("A", "two-way"): ra_c,
        ("B", "two-way"): rb_c,
    }


def evaluate_rates(alloc: Allocation, inst: ProblemInstance,
                   split_weights: tuple[float, float] | None = None) -> dict[tuple[str, str], float]:
    """Per-user, per-mode end-to-end rates of a feasible allocation.

    ``split_weights`` chooses the two-way operating point; it defaults to the
    instance weights.
    """
    if split_weights is None:
        split_weights = inst.weights
    return rates_from_hops(hop_rates(alloc, inst), split_weights)


def user_totals(per_mode: dict[tuple[str, str], float]) -> tuple[float, float]:
    ra = per_mode[("A", "direct")] + per_mode[("A", "one-way")] + per_mode[("A", "two-way")]
    rb = per_mode[("B", "direct")] + per_mode[("B", "one-way")] + per_mode[("B", "two-way")]
    return ra, rb
