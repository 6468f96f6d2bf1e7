"""NumPy implementation of the inner maximisation over all subcarriers.

Used when the compiled extension is unavailable; results agree with it to
rounding (sums may differ in the last bits because NumPy reduces pairwise).
"""

from __future__ import annotations

import numpy as np

from .errors import NoConvergence

SIGMA = np.log(2.0)
N_SUMS = 15
_IDLE = 8


def _wf(level, price, gain):
    with np.errstate(divide="ignore", invalid="ignore"):
        p = level / (SIGMA * price) - 1.0 / gain
    p = np.where((gain > 0) & (level > 0), p, 0.0)
    return np.maximum(p, 0.0)


def _mac_obj(pa, pb, la, lb, lab, aa, ab, ga, gb):
    return (la * np.log2(1.0 + pa * ga) + lb * np.log2(1.0 + pb * gb)
            + lab * np.log2(1.0 + pa * ga + pb * gb) - aa * pa - ab * pb)


def _mac_res(pa, pb, la, lb, lab, aa, ab, ga, gb):
    s = 1.0 + pa * ga + pb * gb
    ra = la * ga / (1.0 + pa * ga) + lab * ga / s - SIGMA * aa
    rb = lb * gb / (1.0 + pb * gb) + lab * gb / s - SIGMA * ab
    return ra, rb


def mac_powers(la, lb, lab, aa, ab, ga, gb, tol=1e-12, max_iter=100):
    """Vectorised two-way first-hop power pair; see ``solver.inner.solve_mac_powers``."""
    n = ga.size
    pa = np.zeros(n)
    pb = np.zeros(n)
    pa1 = _wf(la + lab, aa, ga)
    pb1 = _wf(lb + lab, ab, gb)
    on_a = (lb + lab / (1.0 + pa1 * ga)) * gb <= SIGMA * ab
    pa[on_a] = pa1[on_a]
    on_b = ~on_a & ((la + lab / (1.0 + pb1 * gb)) * ga <= SIGMA * aa)
    pb[on_b] = pb1[on_b]
    idx = np.flatnonzero(~on_a & ~on_b)
    if idx.size == 0:
        return pa, pb

    g_a, g_b = ga[idx], gb[idx]
    lo_a, lo_b = _wf(la, aa, g_a), _wf(lb, ab, g_b)
    hi_a, hi_b = pa1[idx], pb1[idx]
    xa_ = np.where(lo_a > 0, lo_a, 0.5 * hi_a)
    xb_ = np.where(lo_b > 0, lo_b, 0.5 * hi_b)
    scale = max(1.0, SIGMA * aa, SIGMA * ab)
    done = np.zeros(idx.size, dtype=bool)
    for _ in range(max_iter):
        ra, rb = _mac_res(xa_, xb_, la, lb, lab, aa, ab, g_a, g_b)
        done |= np.maximum(np.abs(ra), np.abs(rb)) <= tol * scale
        if done.all():
            break
        act = ~done
        x1, x2 = 1.0 + xa_ * g_a, 1.0 + xb_ * g_b
        s = x1 + x2 - 1.0
        haa = -(la * g_a**2 / x1**2 + lab * g_a**2 / s**2)
        hbb = -(lb * g_b**2 / x2**2 + lab * g_b**2 / s**2)
        hab = -lab * g_a * g_b / s**2
        det = haa * hbb - hab * hab
        ok = det > 0
        safe = np.where(ok, det, 1.0)
        da = np.where(ok, -(hbb * ra - hab * rb) / safe, ra)
        db = np.where(ok, -(haa * rb - hab * ra) / safe, rb)
        f0 = _mac_obj(xa_, xb_, la, lb, lab, aa, ab, g_a, g_b)
        r0 = np.maximum(np.abs(ra), np.abs(rb))
        t = np.ones(idx.size)
        pending = act.copy()
        na, nb = xa_.copy(), xb_.copy()
        for _ in range(60):
            ta = np.clip(xa_ + t * da, lo_a, hi_a)
            tb = np.clip(xb_ + t * db, lo_b, hi_b)
            accept = _mac_obj(ta, tb, la, lb, lab, aa, ab, g_a, g_b) >= \
                f0 + 1e-4 * ((ta - xa_) * ra + (tb - xb_) * rb) / SIGMA
            # objective differences vanish in rounding near the optimum
            rta, rtb = _mac_res(ta, tb, la, lb, lab, aa, ab, g_a, g_b)
            accept |= np.maximum(np.abs(rta), np.abs(rtb)) < r0
            take = pending & accept
            na[take], nb[take] = ta[take], tb[take]
            pending &= ~accept
            if not pending.any():
                break
            t[pending] *= 0.5
        stuck = act & (na == xa_) & (nb == xb_)
        if stuck.any():
            done[stuck] = True
        xa_[act], xb_[act] = na[act], nb[act]
    ra, rb = _mac_res(xa_, xb_, la, lb, lab, aa, ab, g_a, g_b)
    if np.max(np.maximum(np.abs(ra), np.abs(rb))) > 1e-9 * scale:
        raise NoConvergence("MAC stationarity system not solved on some subcarriers")
    pa[idx], pb[idx] = xa_, xb_
    return pa, pb


def bc_powers(xa, xb, ar, gra, grb):
    marginal = (xb * gra + xa * grb) / SIGMA
    phi1 = ar * grb * gra
    phi2 = ar * (grb + gra) - (xa + xb) * grb * gra / SIGMA
    phi3 = ar - marginal
    pos = ar < marginal
    with np.errstate(divide="ignore", invalid="ignore"):
        p = -2.0 * phi3 / (phi2 + np.sqrt(phi2 * phi2 - 4.0 * phi1 * phi3))
    return np.where(pos, p, 0.0)


def inner_maximize(gains, dual, weights, mask, tol=1e-12):
    """Best role, powers and aggregate rates/powers for every subcarrier.

    Parameters
    ----------
    gains : (6, N) array
        Squared gains in link order AB, BA, AR, BR, RA, RB.
    dual : (10,) array
        Multipliers in canonical order.
    weights : (2,) array
        ``(w_A, w_B)``.
    mask : (N, 8) uint8 array
        Non-zero where a role is allowed on a subcarrier.
    tol : float
        Relative stationarity tolerance of the two-way first-hop Newton solve.

    Returns
    -------
    roles : (N,) int8
    p_first, p_second : (N,) float64
        Power of the role's transmitter (A's for TW1) and B's TW1 power.
    sums : (15,) float64
        Profit total, then the per-term rate sums and node powers.
    """
    gab, gba, gar, gbr, gra, grb = gains
    lb1a, lb1b, lc1a, lc1b, lab, mua, mub, aa, ab, ar = (float(v) for v in dual)
    lvl_a, lvl_b = weights[0] + mua, weights[1] + mub
    n = gab.size
    allowed = np.asarray(mask, dtype=bool)
    profit = np.full((8, n), -np.inf)
    power = np.zeros((8, n))
    rate = np.zeros((8, n))

    single = (
        (0, lvl_a, aa, gab), (1, lvl_b, ab, gba),
        (2, lb1a, aa, gar), (3, lb1b, ab, gbr),
        (4, lvl_a - lb1a, ar, grb), (5, lvl_b - lb1b, ar, gra),
    )
    for r, level, price, g in single:
        if not allowed[:, r].any():
            continue
        p = _wf(level, price, g)
        rt = np.log2(1.0 + p * g)
        power[r], rate[r] = p, rt
        profit[r] = np.where(allowed[:, r], level * rt - price * p, -np.inf)

    tw_pb = np.zeros(n)
    if allowed[:, 6].any():
        pa, pb = mac_powers(lc1a, lc1b, lab, aa, ab, gar, gbr, tol=tol)
        power[6], tw_pb = pa, pb
        profit[6] = np.where(allowed[:, 6], _mac_obj(pa, pb, lc1a, lc1b, lab, aa, ab, gar, gbr),
                             -np.inf)
    xi_a, xi_b = lvl_a - lc1a - lab, lvl_b - lc1b - lab
    if allowed[:, 7].any():
        p = bc_powers(xi_a, xi_b, ar, gra, grb)
        power[7] = p
        val = xi_a * np.log2(1.0 + p * grb) + xi_b * np.log2(1.0 + p * gra) - ar * p
        profit[7] = np.where(allowed[:, 7], val, -np.inf)

    best = np.argmax(profit, axis=0)  # first maximum: lowest index wins ties
    top = profit[best, np.arange(n)]
    idle = ~(top > 0.0)
    roles = np.where(idle, _IDLE, best).astype(np.int8)
    cols = np.arange(n)
    p_first = np.where(idle, 0.0, power[best, cols])
    p_second = np.where(roles == 6, tw_pb, 0.0)

    sums = np.zeros(N_SUMS)
    sums[0] = np.where(idle, 0.0, top).sum()
    sel = [roles == r for r in range(8)]
    sums[1] = rate[0][sel[0]].sum()
    sums[2] = rate[1][sel[1]].sum()
    sums[3] = rate[2][sel[2]].sum()
    sums[4] = rate[3][sel[3]].sum()
    sums[5] = rate[4][sel[4]].sum()
    sums[6] = rate[5][sel[5]].sum()
    m1 = sel[6]
    pa_, pb_ = p_first[m1], p_second[m1]
    sums[7] = np.log2(1.0 + pa_ * gar[m1]).sum()
    sums[8] = np.log2(1.0 + pb_ * gbr[m1]).sum()
    sums[9] = np.log2(1.0 + pa_ * gar[m1] + pb_ * gbr[m1]).sum()
    m2 = sel[7]
    sums[10] = np.log2(1.0 + p_first[m2] * grb[m2]).sum()
    sums[11] = np.log2(1.0 + p_first[m2] * gra[m2]).sum()
    sums[12] = p_first[sel[0] | sel[2] | m1].sum()
    sums[13] = p_first[sel[1] | sel[3]].sum() + pb_.sum()
    sums[14] = p_first[sel[4] | sel[5] | m2].sum()
    return roles, p_first, p_second, sums
