"""Pure-Python simulation loops.

Reference twin of ``_core.pyx``: every floating-point operation happens in
the same order, so both backends return bit-identical trajectories.
"""

from __future__ import annotations

import math

import numpy as np

from .rng import uniform_at

# status codes shared with the compiled core
OK = 0
BAD_PROBS = 1
INVALID_CELL = 2


def affine_step(x, key, ctr, A, c, pbase, pslope, pclip, center, rate, gamma):
    """One jump of an affine IFS; returns ``(status, new_state_or_xi, ctr)``."""
    d = len(x)
    u1 = uniform_at(key, ctr)
    u2 = uniform_at(key, ctr + 1)
    ctr += 2
    t = -math.log(u1) / gamma
    if rate == 0.0:
        xi = list(x)
    else:
        e = math.exp(-rate * t)
        xi = [center[q] + e * (x[q] - center[q]) for q in range(d)]
    clipped = [min(max(v, -pclip), pclip) for v in xi]
    nmaps = len(pbase)
    probs = []
    total = 0.0
    for i in range(nmaps):
        p = pbase[i]
        row = pslope[i]
        for q in range(d):
            p += row[q] * clipped[q]
        if p < 0.0:
            return BAD_PROBS, xi, ctr
        probs.append(p)
        total += p
    if abs(total - 1.0) > 1e-12:
        return BAD_PROBS, xi, ctr
    sel = -1
    cum = 0.0
    for i in range(nmaps):
        cum += probs[i]
        if u2 <= cum:
            sel = i
            break
    if sel < 0:
        for i in range(nmaps - 1, -1, -1):
            if probs[i] > 0.0:
                sel = i
                break
    Ai = A[sel]
    ci = c[sel]
    out = []
    for r in range(d):
        acc = ci[r]
        row = Ai[r]
        for q in range(d):
            acc += row[q] * xi[q]
        out.append(acc)
    return OK, out, ctr


def affine_ifs_run(starts, n, keys, A, c, pbase, pslope, pclip, center, rate, gamma, out):
    """Fill ``out[t, s, :]`` for every trajectory ``t`` and step ``s``.

    Returns ``(status, traj, step, xi)``; ``xi`` is the offending pre-jump
    point when the selection probabilities are invalid.
    """
    A = np.asarray(A).tolist()
    c = np.asarray(c).tolist()
    pbase = np.asarray(pbase).tolist()
    pslope = np.asarray(pslope).tolist()
    center = np.asarray(center).tolist()
    for t in range(len(starts)):
        x = starts[t].tolist()
        key = int(keys[t])
        ctr = 0
        rows = out[t]
        for s in range(n):
            status, x, ctr = affine_step(x, key, ctr, A, c, pbase, pslope, pclip,
                                         center, rate, gamma)
            if status != OK:
                return status, t, s, x
            rows[s] = x
    return OK, -1, -1, None


def _k_below_factorial(k, i):
    f = 1
    for m in range(2, i + 1):
        f *= m
        if f > k:
            return True
    return k < f


def ce_probs(i, k, offset, k_inf):
    """``(p1, p2)`` of the counterexample chain at ``(i, k)``."""
    if k >= k_inf:
        return 0.0, 0.0
    b = float(k + offset)
    p2 = 1.0 / (b * b * b * b)
    if _k_below_factorial(k, i):
        p1 = 1.0 - p2
    else:
        p1 = p2
    return p1, p2


def ce_step(i, j, k, key, ctr, offset, k_inf):
    """One transition; returns ``(status, i, j, k, ctr)``."""
    p1, p2 = ce_probs(i, k, offset, k_inf)
    s = p1 + p2
    if s > 1.0 + 1e-12:
        return INVALID_CELL, i, j, k, ctr
    u = uniform_at(key, ctr)
    ctr += 1
    if u <= p1:
        return OK, 1, j + 1, 1, ctr
    if u <= s:
        return OK, i, j + 1, k + 1, ctr
    return OK, i + 1, j + 1, k, ctr


def ce_run(starts, n, keys, offset, k_inf, out):
    for t in range(len(starts)):
        i, j, k = (int(v) for v in starts[t])
        key = int(keys[t])
        ctr = 0
        rows = out[t]
        for s in range(n):
            status, i, j, k, ctr = ce_step(i, j, k, key, ctr, offset, k_inf)
            if status != OK:
                return status, t, s, (i, j, k)
            rows[s, 0] = i
            rows[s, 1] = j
            rows[s, 2] = k
    return OK, -1, -1, None
