# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner maximisation over all subcarriers.

Same contract as ``bidirelay._kernels_py.inner_maximize``; sums are reduced
sequentially in subcarrier order.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport log, log2, sqrt, fabs, INFINITY

from .errors import NoConvergence

cnp.import_array()

cdef double SIGMA = log(2.0)
cdef Py_ssize_t N_SUMS = 15
cdef signed char IDLE = 8


cdef inline double _wf(double level, double price, double gain) nogil:
    cdef double p
    if gain <= 0.0 or level <= 0.0:
        return 0.0
    p = level / (SIGMA * price) - 1.0 / gain
    return p if p > 0.0 else 0.0


cdef inline double _clip(double x, double lo, double hi) nogil:
    if x < lo:
        return lo
    if x > hi:
        return hi
    return x


cdef inline double _mac_obj(double pa, double pb, double la, double lb, double lab,
                            double aa, double ab, double ga, double gb) nogil:
    return (la * log2(1.0 + pa * ga) + lb * log2(1.0 + pb * gb)
            + lab * log2(1.0 + pa * ga + pb * gb) - aa * pa - ab * pb)


cdef inline double _mac_resmax(double pa, double pb, double la, double lb, double lab,
                               double aa, double ab, double ga, double gb) nogil:
    cdef double s = 1.0 + pa * ga + pb * gb
    cdef double ra = fabs(la * ga / (1.0 + pa * ga) + lab * ga / s - SIGMA * aa)
    cdef double rb = fabs(lb * gb / (1.0 + pb * gb) + lab * gb / s - SIGMA * ab)
    return ra if ra > rb else rb


cdef int _mac(double la, double lb, double lab, double aa, double ab,
              double ga, double gb, double tol, double* out_a, double* out_b) nogil:
    """Returns 0 on success, 1 if the Newton iteration did not converge."""
    cdef double pa1, pb1, lo_a, lo_b, hi_a, hi_b, pa, pb, na, nb
    cdef double ra, rb, xa, xb, s, haa, hbb, hab, det, da, db, f0, r0, t, scale
    cdef int it, ls
    pa1 = _wf(la + lab, aa, ga)
    if (lb + lab / (1.0 + pa1 * ga)) * gb <= SIGMA * ab:
        out_a[0] = pa1
        out_b[0] = 0.0
        return 0
    pb1 = _wf(lb + lab, ab, gb)
    if (la + lab / (1.0 + pb1 * gb)) * ga <= SIGMA * aa:
        out_a[0] = 0.0
        out_b[0] = pb1
        return 0
    lo_a = _wf(la, aa, ga)
    lo_b = _wf(lb, ab, gb)
    hi_a = pa1
    hi_b = pb1
    pa = lo_a if lo_a > 0.0 else 0.5 * hi_a
    pb = lo_b if lo_b > 0.0 else 0.5 * hi_b
    scale = 1.0
    if SIGMA * aa > scale:
        scale = SIGMA * aa
    if SIGMA * ab > scale:
        scale = SIGMA * ab
    for it in range(100):
        xa = 1.0 + pa * ga
        xb = 1.0 + pb * gb
        s = xa + xb - 1.0
        ra = la * ga / xa + lab * ga / s - SIGMA * aa
        rb = lb * gb / xb + lab * gb / s - SIGMA * ab
        if fabs(ra) <= tol * scale and fabs(rb) <= tol * scale:
            out_a[0] = pa
            out_b[0] = pb
            return 0
        haa = -(la * ga * ga / (xa * xa) + lab * ga * ga / (s * s))
        hbb = -(lb * gb * gb / (xb * xb) + lab * gb * gb / (s * s))
        hab = -lab * ga * gb / (s * s)
        det = haa * hbb - hab * hab
        if det > 0.0:
            da = -(hbb * ra - hab * rb) / det
            db = -(haa * rb - hab * ra) / det
        else:
            da = ra
            db = rb
        f0 = _mac_obj(pa, pb, la, lb, lab, aa, ab, ga, gb)
        r0 = fabs(ra) if fabs(ra) > fabs(rb) else fabs(rb)
        t = 1.0
        na = pa
        nb = pb
        for ls in range(60):
            na = _clip(pa + t * da, lo_a, hi_a)
            nb = _clip(pb + t * db, lo_b, hi_b)
            if _mac_obj(na, nb, la, lb, lab, aa, ab, ga, gb) >= \
                    f0 + 1e-4 * ((na - pa) * ra + (nb - pb) * rb) / SIGMA:
                break
            if _mac_resmax(na, nb, la, lb, lab, aa, ab, ga, gb) < r0:
                break
            t *= 0.5
        if na == pa and nb == pb:
            break
        pa = na
        pb = nb
    xa = 1.0 + pa * ga
    xb = 1.0 + pb * gb
    s = xa + xb - 1.0
    ra = la * ga / xa + lab * ga / s - SIGMA * aa
    rb = lb * gb / xb + lab * gb / s - SIGMA * ab
    out_a[0] = pa
    out_b[0] = pb
    if fabs(ra) > 1e-9 * scale or fabs(rb) > 1e-9 * scale:
        return 1
    return 0


cdef inline double _bc(double xa, double xb, double ar, double gra, double grb) nogil:
    cdef double marginal = (xb * gra + xa * grb) / SIGMA
    cdef double phi1, phi2, phi3
    if ar >= marginal:
        return 0.0
    phi1 = ar * grb * gra
    phi2 = ar * (grb + gra) - (xa + xb) * grb * gra / SIGMA
    phi3 = ar - marginal
    return -2.0 * phi3 / (phi2 + sqrt(phi2 * phi2 - 4.0 * phi1 * phi3))


def inner_maximize(const double[:, ::1] gains, const double[::1] dual,
                   const double[::1] weights, const unsigned char[:, :] mask,
                   double tol=1e-12):
    cdef Py_ssize_t n = gains.shape[1]
    cdef Py_ssize_t i
    cdef int r, best, failed = 0
    cdef double lb1a = dual[0], lb1b = dual[1], lc1a = dual[2], lc1b = dual[3]
    cdef double lab = dual[4], mua = dual[5], mub = dual[6]
    cdef double aa = dual[7], ab = dual[8], ar = dual[9]
    cdef double lvl_a = weights[0] + mua, lvl_b = weights[1] + mub
    cdef double lb2a = lvl_a - lb1a, lb2b = lvl_b - lb1b
    cdef double xi_a = lvl_a - lc1a - lab, xi_b = lvl_b - lc1b - lab
    cdef double gab, gba, gar, gbr, gra, grb
    cdef double prof[8]
    cdef double powr[8]
    cdef double top, tw_pa, tw_pb, p, rt_a, rt_b

    roles_arr = np.empty(n, dtype=np.int8)
    p1_arr = np.zeros(n, dtype=np.float64)
    p2_arr = np.zeros(n, dtype=np.float64)
    sums_arr = np.zeros(N_SUMS, dtype=np.float64)
    cdef signed char[::1] roles = roles_arr
    cdef double[::1] p1 = p1_arr
    cdef double[::1] p2 = p2_arr
    cdef double[::1] sums = sums_arr

    with nogil:
        for i in range(n):
            gab = gains[0, i]
            gba = gains[1, i]
            gar = gains[2, i]
            gbr = gains[3, i]
            gra = gains[4, i]
            grb = gains[5, i]
            for r in range(8):
                prof[r] = -INFINITY
                powr[r] = 0.0
            tw_pb = 0.0
            if mask[i, 0]:
                powr[0] = _wf(lvl_a, aa, gab)
                prof[0] = lvl_a * log2(1.0 + powr[0] * gab) - aa * powr[0]
            if mask[i, 1]:
                powr[1] = _wf(lvl_b, ab, gba)
                prof[1] = lvl_b * log2(1.0 + powr[1] * gba) - ab * powr[1]
            if mask[i, 2]:
                powr[2] = _wf(lb1a, aa, gar)
                prof[2] = lb1a * log2(1.0 + powr[2] * gar) - aa * powr[2]
            if mask[i, 3]:
                powr[3] = _wf(lb1b, ab, gbr)
                prof[3] = lb1b * log2(1.0 + powr[3] * gbr) - ab * powr[3]
            if mask[i, 4]:
                powr[4] = _wf(lb2a, ar, grb)
                prof[4] = lb2a * log2(1.0 + powr[4] * grb) - ar * powr[4]
            if mask[i, 5]:
                powr[5] = _wf(lb2b, ar, gra)
                prof[5] = lb2b * log2(1.0 + powr[5] * gra) - ar * powr[5]
            if mask[i, 6]:
                if _mac(lc1a, lc1b, lab, aa, ab, gar, gbr, tol, &tw_pa, &tw_pb):
                    failed = 1
                powr[6] = tw_pa
                prof[6] = _mac_obj(tw_pa, tw_pb, lc1a, lc1b, lab, aa, ab, gar, gbr)
            if mask[i, 7]:
                powr[7] = _bc(xi_a, xi_b, ar, gra, grb)
                prof[7] = (xi_a * log2(1.0 + powr[7] * grb)
                           + xi_b * log2(1.0 + powr[7] * gra) - ar * powr[7])

            best = 0
            top = prof[0]
            for r in range(1, 8):
                if prof[r] > top:
                    top = prof[r]
                    best = r
            if not top > 0.0:
                roles[i] = IDLE
                continue
            roles[i] = best
            p = powr[best]
            p1[i] = p
            sums[0] += top
            if best == 0:
                sums[1] += log2(1.0 + p * gab)
                sums[12] += p
            elif best == 1:
                sums[2] += log2(1.0 + p * gba)
                sums[13] += p
            elif best == 2:
                sums[3] += log2(1.0 + p * gar)
                sums[12] += p
            elif best == 3:
                sums[4] += log2(1.0 + p * gbr)
                sums[13] += p
            elif best == 4:
                sums[5] += log2(1.0 + p * grb)
                sums[14] += p
            elif best == 5:
                sums[6] += log2(1.0 + p * gra)
                sums[14] += p
            elif best == 6:
                p2[i] = tw_pb
                sums[7] += log2(1.0 + p * gar)
                sums[8] += log2(1.0 + tw_pb * gbr)
                sums[9] += log2(1.0 + p * gar + tw_pb * gbr)
                sums[12] += p
                sums[13] += tw_pb
            else:
                sums[10] += log2(1.0 + p * grb)
                sums[11] += log2(1.0 + p * gra)
                sums[14] += p
    if failed:
        raise NoConvergence("MAC stationarity system not solved on some subcarriers")
    return roles_arr, p1_arr, p2_arr, sums_arr
