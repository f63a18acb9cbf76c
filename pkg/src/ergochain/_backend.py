"""Selects the compiled core when it is importable, else the Python loops.

Set ``ERGOCHAIN_PURE=1`` to force the pure-Python fallback.
"""

from __future__ import annotations

import os

import numpy as np

from . import _pycore

try:
    if os.environ.get("ERGOCHAIN_PURE", "") not in ("", "0"):
        raise ImportError("pure-Python backend forced")
    from . import _core
except ImportError:
    _core = None

__all__ = ["available", "default_backend", "run_affine", "run_ce", "OK", "BAD_PROBS",
           "INVALID_CELL"]

OK = _pycore.OK
BAD_PROBS = _pycore.BAD_PROBS
INVALID_CELL = _pycore.INVALID_CELL


def available() -> tuple:
    return ("compiled", "python") if _core is not None else ("python",)


def default_backend() -> str:
    return "compiled" if _core is not None else "python"


def _pick(backend):
    backend = backend or default_backend()
    if backend == "compiled" and _core is None:
        raise RuntimeError("compiled core is not built; reinstall with a C compiler")
    if backend not in ("compiled", "python"):
        raise ValueError(f"unknown backend {backend!r}")
    return backend


def run_affine(starts, n, keys, params, backend=None):
    """Simulate an affine IFS from each start row; returns ``(out, error)``.

    ``error`` is None or ``(traj, step, xi)``.
    """
    starts = np.ascontiguousarray(starts, dtype=np.float64)
    keys = np.ascontiguousarray(keys, dtype=np.uint64)
    m, d = starts.shape
    out = np.empty((m, n, d), dtype=np.float64)
    A, c, pbase, pslope, pclip, center, rate, gamma = params
    if _pick(backend) == "compiled":
        scratch = np.empty(2 * d + len(pbase), dtype=np.float64)
        status, t, s = _core.affine_ifs_run(starts, n, keys, A, c, pbase, pslope, pclip,
                                            center, rate, gamma, out, scratch)
        xi = scratch[:d].tolist() if status != OK else None
    else:
        status, t, s, xi = _pycore.affine_ifs_run(starts, n, keys, A, c, pbase, pslope,
                                                  pclip, center, rate, gamma, out)
    if status != OK:
        return out, (t, s, xi)
    return out, None


def run_ce(starts, n, keys, offset, k_inf, backend=None):
    """Simulate the counterexample chain; returns ``(out, error)`` with
    ``error`` None or ``(traj, step, (i, j, k))``."""
    starts = np.ascontiguousarray(starts, dtype=np.int64)
    keys = np.ascontiguousarray(keys, dtype=np.uint64)
    m = len(starts)
    out = np.empty((m, n, 3), dtype=np.int64)
    if _pick(backend) == "compiled":
        status, t, s, i, j, k = _core.ce_run(starts, n, keys, offset, k_inf, out)
        cell = (i, j, k)
    else:
        status, t, s, cell = _pycore.ce_run(starts, n, keys, offset, k_inf, out)
    if status != OK:
        return out, (t, s, cell)
    return out, None
