# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled simulation loops; bit-compatible with ``_pycore``."""

from libc.math cimport log, exp, fabs
from libc.stdint cimport uint64_t, int64_t

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef double TWO_M53 = 1.0 / 9007199254740992.0

DEF OK = 0
DEF BAD_PROBS = 1
DEF INVALID_CELL = 2


cdef inline uint64_t mix64(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline double uniform_at(uint64_t key, uint64_t ctr) noexcept nogil:
    cdef uint64_t h = mix64(key + (ctr + 1) * GOLDEN)
    return <double>((h >> 11) + 1) * TWO_M53


def uniform(uint64_t key, uint64_t ctr):
    return uniform_at(key, ctr)


def affine_ifs_run(const double[:, ::1] starts, Py_ssize_t n,
                   const uint64_t[::1] keys,
                   const double[:, :, ::1] A, const double[:, ::1] c,
                   const double[::1] pbase, const double[:, ::1] pslope,
                   double pclip, const double[::1] center, double rate,
                   double gamma, double[:, :, ::1] out,
                   double[::1] scratch):
    """Fill ``out``; ``scratch`` needs room for ``2 * dim + nmaps`` doubles.

    Returns ``(status, traj, step)``; on BAD_PROBS the pre-jump point is
    left in ``scratch[:dim]``.
    """
    cdef Py_ssize_t m = starts.shape[0]
    cdef Py_ssize_t d = starts.shape[1]
    cdef Py_ssize_t nmaps = pbase.shape[0]
    cdef Py_ssize_t t, s, q, r, i, sel
    cdef uint64_t key, ctr
    cdef double u1, u2, tt, e, p, total, cum, acc, v
    cdef double* x
    cdef double* xi = &scratch[0]
    cdef double* clipped = &scratch[d]
    cdef double* probs = &scratch[2 * d]
    cdef int status = OK
    cdef Py_ssize_t bad_t = -1, bad_s = -1

    with nogil:
        for t in range(m):
            key = keys[t]
            ctr = 0
            for s in range(n):
                if s == 0:
                    x = <double*>&starts[t, 0]
                else:
                    x = &out[t, s - 1, 0]
                u1 = uniform_at(key, ctr)
                u2 = uniform_at(key, ctr + 1)
                ctr += 2
                tt = -log(u1) / gamma
                if rate == 0.0:
                    for q in range(d):
                        xi[q] = x[q]
                else:
                    e = exp(-rate * tt)
                    for q in range(d):
                        xi[q] = center[q] + e * (x[q] - center[q])
                for q in range(d):
                    v = xi[q]
                    if v < -pclip:
                        v = -pclip
                    if v > pclip:
                        v = pclip
                    clipped[q] = v
                total = 0.0
                for i in range(nmaps):
                    p = pbase[i]
                    for q in range(d):
                        p += pslope[i, q] * clipped[q]
                    if p < 0.0:
                        status = BAD_PROBS
                        break
                    probs[i] = p
                    total += p
                if status == OK and fabs(total - 1.0) > 1e-12:
                    status = BAD_PROBS
                if status != OK:
                    bad_t = t
                    bad_s = s
                    break
                sel = -1
                cum = 0.0
                for i in range(nmaps):
                    cum += probs[i]
                    if u2 <= cum:
                        sel = i
                        break
                if sel < 0:
                    i = nmaps - 1
                    while i >= 0:
                        if probs[i] > 0.0:
                            sel = i
                            break
                        i -= 1
                for r in range(d):
                    acc = c[sel, r]
                    for q in range(d):
                        acc += A[sel, r, q] * xi[q]
                    out[t, s, r] = acc
            if status != OK:
                break
    return status, bad_t, bad_s


cdef inline bint k_below_factorial(int64_t k, int64_t i) noexcept nogil:
    cdef int64_t f = 1
    cdef int64_t mm
    for mm in range(2, i + 1):
        f *= mm
        if f > k:
            return True
    return k < f


def ce_run(const int64_t[:, ::1] starts, Py_ssize_t n, const uint64_t[::1] keys,
           int64_t offset, int64_t k_inf, int64_t[:, :, ::1] out):
    """Counterexample chain loop; returns ``(status, traj, step, i, j, k)``."""
    cdef Py_ssize_t m = starts.shape[0]
    cdef Py_ssize_t t, s
    cdef int64_t i, j, k
    cdef uint64_t key, ctr
    cdef double b, p1, p2, tot, u
    cdef int status = OK
    cdef Py_ssize_t bad_t = -1, bad_s = -1

    with nogil:
        for t in range(m):
            i = starts[t, 0]
            j = starts[t, 1]
            k = starts[t, 2]
            key = keys[t]
            ctr = 0
            for s in range(n):
                if k >= k_inf:
                    p1 = 0.0
                    p2 = 0.0
                else:
                    b = <double>(k + offset)
                    p2 = 1.0 / (b * b * b * b)
                    if k_below_factorial(k, i):
                        p1 = 1.0 - p2
                    else:
                        p1 = p2
                tot = p1 + p2
                if tot > 1.0 + 1e-12:
                    status = INVALID_CELL
                    bad_t = t
                    bad_s = s
                    break
                u = uniform_at(key, ctr)
                ctr += 1
                if u <= p1:
                    i = 1
                    k = 1
                elif u <= tot:
                    k = k + 1
                else:
                    i = i + 1
                j = j + 1
                out[t, s, 0] = i
                out[t, s, 1] = j
                out[t, s, 2] = k
            if status != OK:
                break
    if status != OK:
        return status, bad_t, bad_s, i, j, k
    return status, -1, -1, 0, 0, 0
