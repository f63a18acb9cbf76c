"""The sequence-space chain that satisfies the return condition yet has no
invariant probability.

States are indices ``(i, j, k)`` of points
``x(i, j, k) = (i, 0, ..., 0, 2^-k, 2^-k, ...)`` of l-infinity, with ``j``
zeros after the leading ``i`` and a constant tail ``2^-k`` (``2^-inf = 0``).
From ``(i, j, k)`` the chain moves to

* ``(1, j+1, 1)``      with probability ``p1(i, k)``,
* ``(i, j+1, k+1)``    with probability ``p2(k)``,
* ``(i+1, j+1, k)``    otherwise,

where ``p2(k) = (k + offset)^-4`` and ``p1(i, k) = 1 - p2(k)`` if ``k < i!``
else ``p2(k)``.  The ``j`` coordinate grows deterministically, which is why
every Cesaro average loses its mass.
"""

from __future__ import annotations

import enum
import math
from typing import Optional

import numpy as np
from scipy.stats import norm as _normal

from . import _backend, _pycore
from .kernel import Ensemble, Kernel, ensemble, stream_keys, wilson_interval
from .points import INFINITY, K_INF, SeqState, Space
from .report import DiagnosticReport, SeriesPoint, Verdict, verdict_positive
from .rng import RandomStream

__all__ = [
    "Mode", "InvalidCellError", "CExampleChain", "seq_distance", "seq_distance_raw",
    "ce_step", "u0_visit_frequency", "escape_statistics", "z_return_probe",
    "one_step_law", "product_lower_bound", "Z", "TAIL_NOTE",
]

TAIL_NOTE = ("x(i,j,k) read with a constant tail 2^-k from coordinate j+2 on; "
             "x(i,j,inf) = (i,0,0,...) for every j")
SEQ_SPACE = Space("seq")
Z = SeqState(1, 1, INFINITY)


class Mode(str, enum.Enum):
    PATCHED = "patched"
    LITERAL = "literal"


class InvalidCellError(ValueError):
    """Branch probabilities exceed one at the current state."""

    def __init__(self, state: SeqState, p1: float, p2: float):
        self.state = state
        self.p1, self.p2 = p1, p2
        cell = f"({state.i},{state.k})"
        super().__init__(f"paper parameters invalid at {cell}: p1 + p2 = {p1 + p2!r} > 1 "
                         f"in state {state}")


def _tail(k: np.ndarray) -> np.ndarray:
    return np.ldexp(1.0, -np.minimum(k, 4096).astype(np.int32))


def seq_distance_raw(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Vectorized l-infinity distance between raw ``(..., 3)`` index arrays."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    ta, tb = _tail(a[..., 2]), _tail(b[..., 2])
    ja, jb = a[..., 1], b[..., 1]
    # coordinates strictly between the two zero runs: tail of the shorter run vs 0
    gap = np.where(ja == jb, 0.0, np.where(ja < jb, ta, tb))
    head = np.abs(a[..., 0] - b[..., 0]).astype(float)
    return np.maximum(np.maximum(head, gap), np.abs(ta - tb))


def seq_distance(s1: SeqState, s2: SeqState) -> float:
    """Distance between the embedded points x(s1) and x(s2)."""
    return float(seq_distance_raw(SEQ_SPACE.raw(s1), SEQ_SPACE.raw(s2)))


class CExampleChain(Kernel):
    """Kernel of the sequence-space chain.

    ``mode=PATCHED`` uses ``p2(k) = (k + p2_offset)^-4`` (offset 1 by
    default); ``LITERAL`` uses ``k^-4`` and fails at the cell (1, 1).
    """

    def __init__(self, mode: Mode = Mode.PATCHED, p2_offset: int = 1,
                 backend: Optional[str] = None):
        self.mode = Mode(mode)
        if self.mode is Mode.LITERAL:
            p2_offset = 0
        if int(p2_offset) != p2_offset or p2_offset < 0:
            raise ValueError("p2_offset must be a nonnegative integer")
        self.offset = int(p2_offset)
        self.backend = backend
        self.name = "COUNTEREXAMPLE"
        self.space = SEQ_SPACE

    def p2(self, k) -> float:
        return _pycore.ce_probs(1, K_INF if k == INFINITY else int(k), self.offset, K_INF)[1]

    def p1(self, i: int, k) -> float:
        return _pycore.ce_probs(int(i), K_INF if k == INFINITY else int(k), self.offset, K_INF)[0]

    def branch_probabilities(self, i: int, k) -> tuple:
        """``(reset, deepen, advance)`` probabilities at ``(i, ., k)``."""
        p1, p2 = _pycore.ce_probs(int(i), K_INF if k == INFINITY else int(k), self.offset, K_INF)
        return p1, p2, 1.0 - p1 - p2

    def _check_start(self, i, j, k):
        if k >= K_INF:
            raise ValueError("states with k = inf are limit points, not simulatable starts")

    def advance(self, x, rng: RandomStream):
        i, j, k = (int(v) for v in x)
        self._check_start(i, j, k)
        status, i2, j2, k2, ctr = _pycore.ce_step(i, j, k, rng.key, rng.counter, self.offset, K_INF)
        if status != _pycore.OK:
            p1, p2 = _pycore.ce_probs(i, k, self.offset, K_INF)
            raise InvalidCellError(SeqState(i, j, k), p1, p2)
        rng.counter = ctr
        return np.array([i2, j2, k2], dtype=np.int64)

    def run(self, starts, n, master_seed, stream_ids):
        starts = np.asarray(starts, dtype=np.int64)
        if len(starts) and starts[:, 2].max() >= K_INF:
            raise ValueError("states with k = inf are limit points, not simulatable starts")
        keys = stream_keys(master_seed, stream_ids)
        out, err = _backend.run_ce(starts, n, keys, self.offset, K_INF, self.backend)
        if err is not None:
            _, _, (i, j, k) = err
            p1, p2 = _pycore.ce_probs(int(i), int(k), self.offset, K_INF)
            raise InvalidCellError(SeqState(int(i), int(j), int(k)), p1, p2)
        return out

    def describe(self) -> dict:
        return {"name": self.name, "space": self.space.tag, "mode": self.mode.value,
                "p2_offset": self.offset, "tail_convention": TAIL_NOTE}


def ce_step(chain: CExampleChain, s: SeqState, rng: RandomStream) -> SeqState:
    """One transition; consumes one uniform."""
    return chain.step(s, rng)


def one_step_law(chain: CExampleChain, s: SeqState) -> list:
    """Exact one-step distribution from ``s`` as ``[(state, prob), ...]``."""
    p1, p2, stay = chain.branch_probabilities(s.i, s.k)
    k = s.k
    return [(SeqState(1, s.j + 1, 1), p1),
            (SeqState(s.i, s.j + 1, k + 1 if k != INFINITY else INFINITY), p2),
            (SeqState(s.i + 1, s.j + 1, k), stay)]


def _as_array(trajectories):
    if isinstance(trajectories, Ensemble):
        return trajectories.array, SEQ_SPACE.raw(trajectories[0].start)
    arr = np.stack([tr.states for tr in trajectories])
    starts = np.stack([SEQ_SPACE.raw(tr.start) for tr in trajectories])
    return arr, starts


def _running_mean_ci(hits: np.ndarray, confidence: float):
    """Running Cesaro average of a ``(m, n)`` 0/1 array with a normal CI over
    per-trajectory averages."""
    m, n = hits.shape
    z = float(_normal.ppf(0.5 + confidence / 2.0))
    per_traj = np.cumsum(hits, axis=1) / np.arange(1, n + 1)
    est = per_traj.mean(axis=0)
    se = per_traj.std(axis=0, ddof=1) / math.sqrt(m) if m > 1 else np.zeros(n)
    return est, np.clip(est - z * se, 0.0, 1.0), np.clip(est + z * se, 0.0, 1.0)


def u0_visit_frequency(trajectories, burn_in: int = 0,
                       confidence: float = 0.95) -> DiagnosticReport:
    """Per-step frequency of ``U0 = {i = 1, k = 1}``, its running Cesaro
    average, and ``theta_hat = min`` of the per-step frequency over steps
    after ``burn_in``."""
    arr, _ = _as_array(trajectories)
    m, n = arr.shape[0], arr.shape[1]
    if not 0 <= burn_in < n:
        raise ValueError("burn_in must lie in [0, horizon)")
    hits = (arr[:, :, 0] == 1) & (arr[:, :, 2] == 1)
    counts = hits.sum(axis=0)
    per_step = [wilson_interval(int(c), m, confidence) for c in counts]
    series = [SeriesPoint(t + 1, e.p_hat, e.ci_low, e.ci_high) for t, e in enumerate(per_step)]
    cest, clo, chi = _running_mean_ci(hits.astype(float), confidence)
    cesaro = [SeriesPoint(t + 1, float(cest[t]), float(clo[t]), float(chi[t])) for t in range(n)]
    tail = counts[burn_in:]
    t_min = burn_in + int(np.argmin(tail))
    theta = per_step[t_min]
    return DiagnosticReport(
        condition_name="u0_visit_frequency",
        inputs={"trajectories": m, "horizon": n, "burn_in": burn_in, "confidence": confidence},
        verdict=verdict_positive(theta.ci_low, theta.ci_high, 0.0),
        threshold={"theta_hat_ci_low_gt": 0.0},
        statistic={"theta_hat": theta.p_hat, "ci_low": theta.ci_low, "ci_high": theta.ci_high,
                   "at_step": t_min + 1, "cesaro_final": float(cest[-1])},
        series=series,
        extra_series={"cesaro": cesaro},
        notes=["theta_hat is the empirical infimum of P^n(x, U0) over the horizon; "
               "its analytic value is not computed"],
    )


def escape_statistics(trajectories, j_window: int) -> DiagnosticReport:
    """Check ``j_n = j_0 + n`` on every path and track the Cesaro mass on
    ``{j <= j_0 + j_window}`` (the window counts levels above the start)."""
    if j_window < 0:
        raise ValueError("j_window must be >= 0")
    arr, starts = _as_array(trajectories)
    m, n = arr.shape[0], arr.shape[1]
    starts = np.broadcast_to(starts, (m, 3))
    expected = starts[:, 1][:, None] + np.arange(1, n + 1)[None, :]
    bad = np.argwhere(arr[:, :, 1] != expected)
    witnesses = [{"trajectory": int(t), "step": int(s) + 1, "j": int(arr[t, s, 1]),
                  "expected": int(expected[t, s])} for t, s in bad[:20]]
    inside = arr[:, :, 1] <= (starts[:, 1][:, None] + j_window)
    cum = np.cumsum(inside.sum(axis=0))
    grid = sorted(set(np.unique(np.geomspace(1, n, num=min(n, 200)).astype(int)).tolist()) | {n})
    series = []
    for t in grid:
        mass = int(cum[t - 1]) / (t * m)
        series.append(SeriesPoint(t, mass, mass, mass))
    final = series[-1].estimate
    deterministic = len(bad) == 0
    decays = final <= series[0].estimate and (final < 1.0 or n <= j_window)
    verdict = Verdict.PASS if deterministic and decays else Verdict.FAIL
    return DiagnosticReport(
        condition_name="escape_statistics",
        inputs={"trajectories": m, "horizon": n, "j_window": j_window},
        verdict=verdict,
        threshold={"j_increment": 1},
        statistic={"deterministic_j": deterministic, "final_mass": final,
                   "window_levels": j_window,
                   "mismatches": int(len(bad))},
        series=series,
        witnesses=witnesses,
        notes=["distinct-j states with k = 1 are 1/2 apart, so a compact set meets finitely "
               "many such levels and its Cesaro mass must vanish",
               TAIL_NOTE],
    )


def product_lower_bound(chain: CExampleChain, theta: float, radius: float) -> tuple:
    """``theta * p2(1) ... p2(k*)`` where ``k*`` is the least k with
    ``2^-k < radius``; returns ``(bound, k*)``."""
    if not radius > 0:
        raise ValueError("radius must be positive")
    kstar = 1
    while math.ldexp(1.0, -kstar) >= radius:
        kstar += 1
    prod = theta
    for k in range(1, kstar + 1):
        prod *= chain.p2(k)
    return prod, kstar


def z_return_probe(chain: CExampleChain, start: SeqState, radius: float, n: int, m: int,
                   seed: int, confidence: float = 0.95, burn_in: Optional[int] = None,
                   threads: int = 1) -> DiagnosticReport:
    """Running Cesaro frequency of ``B(z, radius)`` hits, ``z = x(1, 1, inf)``.

    A state hits iff ``i = 1`` and ``2^-k < radius``.
    """
    if not radius > 0:
        raise ValueError("radius must be positive")
    ens = ensemble(chain, start, n, m, seed, threads)
    arr = ens.array
    hits = (arr[:, :, 0] == 1) & (_tail(arr[:, :, 2]) < radius)
    est, lo, hi = _running_mean_ci(hits.astype(float), confidence)
    series = [SeriesPoint(t + 1, float(est[t]), float(lo[t]), float(hi[t])) for t in range(n)]
    q = max(0, n - max(1, n // 4))
    t_best = q + int(np.argmax(est[q:]))
    u0 = u0_visit_frequency(ens, burn_in=burn_in if burn_in is not None else n // 10,
                            confidence=confidence)
    theta = u0.statistic["theta_hat"]
    bound, kstar = product_lower_bound(chain, theta, radius)
    step_freq = hits.mean(axis=0)
    return DiagnosticReport(
        condition_name="z_return_probe",
        inputs={"kernel": chain.describe(), "start": str(start), "radius": radius, "n": n,
                "m": m, "seed": seed, "confidence": confidence},
        verdict=verdict_positive(float(lo[t_best]), float(hi[t_best]), 0.0),
        threshold={"ci_low_gt": 0.0},
        statistic={"limsup_proxy": float(est[t_best]), "ci_low": float(lo[t_best]),
                   "ci_high": float(hi[t_best]), "at_n": t_best + 1,
                   "theta_hat": theta, "k_star": kstar, "product_lower_bound": bound,
                   "tail_step_frequency_min": float(step_freq[q:].min()),
                   "consistent_with_bound": bool(hi[t_best] >= bound)},
        series=series,
        notes=["balls only", TAIL_NOTE],
    )
