"""Markov kernels, seeded ensembles and Monte Carlo transition estimates."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np
from scipy.stats import norm as _normal

from .metric import EmpiricalMeasure, TestFunctionDictionary, bl_distance, build_dictionary
from .points import MetricError, MetricPoint, Space
from .rng import RandomStream, derive_seed, stream_key

__all__ = [
    "Kernel", "FunctionKernel", "Trajectory", "Ensemble", "ProbabilityEstimate",
    "MCEstimate", "simulate", "ensemble", "run_from", "endpoint_measure",
    "cesaro_measure", "pn_f", "pn_set", "invariance_residual", "propagate",
    "wilson_interval", "wilson_arrays", "DEFAULT_HORIZON", "DEFAULT_ENSEMBLE",
]

DEFAULT_HORIZON = 10_000
DEFAULT_ENSEMBLE = 1_000


class Kernel:
    """One-step sampler of a transition function P(x, .).

    Subclasses implement :meth:`advance` on raw state rows.  ``run`` may be
    overridden with a faster loop as long as it consumes the streams in
    exactly the same way.
    """

    name: str = "kernel"
    space: Space = Space()

    def advance(self, x: np.ndarray, rng: RandomStream) -> np.ndarray:
        raise NotImplementedError

    def step(self, x: MetricPoint, rng: RandomStream) -> MetricPoint:
        return self.space.point(self.advance(self.space.raw(x), rng))

    def run(self, starts: np.ndarray, n: int, master_seed: int,
            stream_ids: Sequence[int]) -> np.ndarray:
        """States ``(len(starts), n, dim)``; trajectory ``t`` uses ``stream_ids[t]``."""
        out = np.empty((len(starts), n, self.space.dim), dtype=self.space.dtype)
        for t, (x, sid) in enumerate(zip(starts, stream_ids)):
            rng = RandomStream(master_seed, int(sid))
            for s in range(n):
                x = self.advance(x, rng)
                out[t, s] = x
        return out

    def describe(self) -> dict:
        return {"name": self.name, "space": self.space.tag}

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.name!r})"


class FunctionKernel(Kernel):
    """Kernel from a plain ``step(point, rng) -> point`` callable."""

    def __init__(self, name: str, space: Space, step: Callable):
        self.name = name
        self.space = space
        self._step = step

    def advance(self, x, rng):
        nxt = self._step(self.space.point(x), rng)
        return self.space.raw(nxt)


@dataclass
class Trajectory:
    start: MetricPoint
    states: np.ndarray  # raw (n, dim); row t ~ P^{t+1}(start, .)
    stream_id: int
    space: Space

    def __len__(self) -> int:
        return len(self.states)

    def point(self, t: int) -> MetricPoint:
        return self.space.point(self.states[t])

    def points(self) -> list:
        return [self.space.point(row) for row in self.states]


class Ensemble(list):
    """Trajectories ordered by stream id, backed by one ``(m, n, dim)`` array."""

    def __init__(self, array: np.ndarray, start: MetricPoint, space: Space,
                 stream_ids: Sequence[int]):
        super().__init__(Trajectory(start, array[t], int(sid), space)
                         for t, sid in enumerate(stream_ids))
        self.array = array
        self.space = space


def _check_start(kernel: Kernel, x0) -> np.ndarray:
    try:
        return kernel.space.raw(x0)
    except MetricError as exc:
        raise MetricError(f"start point does not fit kernel {kernel.name}: {exc}") from None


def simulate(kernel: Kernel, x0, n: int, stream: RandomStream) -> Trajectory:
    """Trajectory of length ``n`` drawn from ``stream`` (which is advanced)."""
    if n < 1:
        raise ValueError("horizon must be >= 1")
    x = _check_start(kernel, x0)
    out = np.empty((n, kernel.space.dim), dtype=kernel.space.dtype)
    for s in range(n):
        x = kernel.advance(x, stream)
        out[s] = x
    return Trajectory(kernel.space.point(x0), out, stream.stream_id, kernel.space)


def run_from(kernel: Kernel, starts: np.ndarray, n: int, master_seed: int,
             stream_ids: Sequence[int], threads: int = 1) -> np.ndarray:
    """Run ``kernel`` from each raw start with its stream id, possibly in threads.

    Work is split into contiguous blocks of stream ids and the blocks are
    concatenated in order, so the result does not depend on ``threads``.
    """
    if n < 1:
        raise ValueError("horizon must be >= 1")
    starts = kernel.space.raw_many(starts)
    stream_ids = np.asarray(stream_ids, dtype=np.uint64)
    m = len(starts)
    threads = max(1, min(int(threads), m))
    if threads == 1:
        return kernel.run(starts, n, master_seed, stream_ids)
    bounds = np.linspace(0, m, threads + 1).astype(int)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(
            lambda ab: kernel.run(starts[ab[0]:ab[1]], n, master_seed, stream_ids[ab[0]:ab[1]]),
            zip(bounds[:-1], bounds[1:])))
    return np.concatenate(parts, axis=0)


def ensemble(kernel: Kernel, x0, n: int, m: int, master_seed: int,
             threads: int = 1) -> Ensemble:
    """``m`` trajectories from ``x0``; trajectory ``t`` runs on stream ``t``."""
    if m < 1:
        raise ValueError("ensemble size must be >= 1")
    x = _check_start(kernel, x0)
    starts = np.repeat(x[None, :], m, axis=0)
    ids = np.arange(m, dtype=np.uint64)
    arr = run_from(kernel, starts, n, master_seed, ids, threads)
    return Ensemble(arr, kernel.space.point(x0), kernel.space, ids.tolist())


def _stack(trajectories, n: int):
    if isinstance(trajectories, Ensemble):
        arr, space = trajectories.array, trajectories.space
    else:
        if not trajectories:
            raise ValueError("no trajectories")
        space = trajectories[0].space
        if any(len(tr) < n for tr in trajectories):
            raise ValueError(f"horizon {n} exceeds a trajectory length")
        arr = np.stack([tr.states[:n] for tr in trajectories])
    if n < 1 or n > arr.shape[1]:
        raise ValueError(f"horizon {n} outside 1..{arr.shape[1]}")
    return arr, space


def endpoint_measure(trajectories, n: int) -> EmpiricalMeasure:
    """Empirical P^n(x0, .): the step-``n`` states with weight 1/m each."""
    arr, space = _stack(trajectories, n)
    return EmpiricalMeasure(space, arr[:, n - 1, :])


def cesaro_measure(trajectories, n: int) -> EmpiricalMeasure:
    """Empirical Cesaro average (1/n) sum_{i<=n} P^i(x0, .)."""
    arr, space = _stack(trajectories, n)
    pts = arr[:, :n, :].reshape(-1, space.dim)
    return EmpiricalMeasure(space, pts)


class ProbabilityEstimate(NamedTuple):
    p_hat: float
    ci_low: float
    ci_high: float
    n_samples: int
    confidence: float = 0.95


class MCEstimate(NamedTuple):
    value: float
    stderr: float
    n_samples: int


def wilson_interval(hits: int, n: int, confidence: float = 0.95) -> ProbabilityEstimate:
    """Wilson score interval for a binomial proportion."""
    if n < 1:
        raise ValueError("need at least one trial")
    z = float(_normal.ppf(0.5 + confidence / 2.0))
    p = hits / n
    denom = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    lo = 0.0 if hits == 0 else max(0.0, centre - half)
    hi = 1.0 if hits == n else min(1.0, centre + half)
    return ProbabilityEstimate(p, min(lo, p), max(hi, p), n, confidence)


def wilson_arrays(hits: np.ndarray, n: int, confidence: float = 0.95):
    """Vectorized :func:`wilson_interval`; returns ``(p_hat, low, high)`` arrays."""
    z = float(_normal.ppf(0.5 + confidence / 2.0))
    hits = np.asarray(hits, dtype=float)
    p = hits / n
    denom = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    lo = np.where(hits == 0, 0.0, np.maximum(0.0, centre - half))
    hi = np.where(hits == n, 1.0, np.minimum(1.0, centre + half))
    return p, np.minimum(lo, p), np.maximum(hi, p)


def _evaluate(fn, space: Space, pts: np.ndarray, vectorized: bool) -> np.ndarray:
    if vectorized:
        return np.asarray(fn(pts), dtype=float).reshape(len(pts))
    return np.fromiter((fn(space.point(row)) for row in pts), dtype=float, count=len(pts))


def pn_f(kernel: Kernel, x, n: int, f: Callable, m: int, seed: int,
         vectorized: bool = False, threads: int = 1) -> MCEstimate:
    """Monte Carlo P^n f(x) with standard error ``std / sqrt(m)``."""
    if m < 2:
        raise ValueError("pn_f needs m >= 2")
    ens = ensemble(kernel, x, n, m, seed, threads)
    vals = _evaluate(f, kernel.space, ens.array[:, n - 1, :], vectorized)
    return MCEstimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(m)), m)


def pn_set(kernel: Kernel, x, n: int, indicator: Callable, m: int, seed: int,
           confidence: float = 0.95, vectorized: bool = False,
           threads: int = 1) -> ProbabilityEstimate:
    """Hit fraction of a set at step ``n`` with a Wilson interval."""
    if m < 2:
        raise ValueError("pn_set needs m >= 2")
    ens = ensemble(kernel, x, n, m, seed, threads)
    hits = _evaluate(indicator, kernel.space, ens.array[:, n - 1, :], vectorized).astype(bool)
    return wilson_interval(int(hits.sum()), m, confidence)


def propagate(kernel: Kernel, mu: EmpiricalMeasure, n: int, m_per_atom: int,
              master_seed: int, threads: int = 1):
    """Push ``mu`` forward ``n`` steps; atom ``a`` spawns ``m_per_atom`` paths.

    Path ``c`` of atom ``a`` runs on stream ``a * m_per_atom + c`` and
    inherits weight ``w_a / m_per_atom``.  Returns ``(states, weights)`` with
    states shaped ``(atoms * m_per_atom, n, dim)``.
    """
    if m_per_atom < 1:
        raise ValueError("m_per_atom must be >= 1")
    starts = np.repeat(mu.points, m_per_atom, axis=0)
    ids = np.arange(len(starts), dtype=np.uint64)
    states = run_from(kernel, starts, n, master_seed, ids, threads)
    weights = np.repeat(mu.weights / m_per_atom, m_per_atom)
    return states, weights


def invariance_residual(kernel: Kernel, mu: EmpiricalMeasure,
                        dictionary: Optional[TestFunctionDictionary],
                        m_per_atom: int, seed: int, threads: int = 1) -> float:
    """``bl_distance(mu, mu P)`` with mu P sampled one step from every atom."""
    states, weights = propagate(kernel, mu, 1, m_per_atom, derive_seed(seed, "invariance"),
                                threads)
    muP = EmpiricalMeasure(kernel.space, states[:, 0, :], weights, normalize=True)
    if dictionary is None:
        dictionary = build_dictionary([mu, muP], seed=derive_seed(seed, "dictionary"))
    return bl_distance(mu, muP, dictionary)


def stream_keys(master_seed: int, stream_ids) -> np.ndarray:
    return np.array([stream_key(int(master_seed), int(s)) for s in stream_ids], dtype=np.uint64)
