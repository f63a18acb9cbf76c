"""Metrics, empirical measures and the bounded-Lipschitz weak distance."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .points import (MetricError, MetricPoint, RealVector, SeqState,
                     Space, space_of)

__all__ = [
    "distance", "dist_to_finite_set", "FiniteSetIndex", "EmpiricalMeasure",
    "TestFunction", "TestFunctionDictionary", "build_dictionary",
    "bl_distance", "mc_error_bound", "lipschitz_estimate",
]


def _common_space(a: MetricPoint, b: MetricPoint, norm: str) -> Space:
    sa, sb = space_of(a, norm), space_of(b, norm)
    if sa != sb:
        raise MetricError(f"cannot compare {sa.tag} point {a} with {sb.tag} point {b}")
    return sa


def distance(a: MetricPoint, b: MetricPoint, norm: str = "sup") -> float:
    """Distance between two points of the same space.

    Real vectors use the sup norm unless ``norm="euclid"``; sequence states
    use the l-infinity distance of their embedding.
    """
    space = _common_space(a, b, norm)
    return float(space.rowwise(space.raw(a)[None, :], space.raw(b)[None, :])[0])


def dist_to_finite_set(x: MetricPoint, points: Sequence[MetricPoint],
                       norm: str = "sup") -> float:
    """``min_y distance(x, y)`` over a nonempty finite set.

    ``x`` lies in the open eps-fattening of the set iff the result is < eps.
    """
    if len(points) == 0:
        raise MetricError("dist_to_finite_set needs a nonempty point set")
    space = space_of(x, norm)
    return float(FiniteSetIndex(space, space.raw_many(points)).query(space.raw(x)[None, :])[0])


class FiniteSetIndex:
    """Batched nearest distances to a fixed finite set of raw points."""

    def __init__(self, space: Space, points: np.ndarray):
        points = space.raw_many(points)
        if len(points) == 0:
            raise MetricError("empty finite set")
        self.space = space
        self.points = np.unique(points, axis=0)
        self._tree = None
        if space.kind == "real":
            from scipy.spatial import cKDTree
            self._tree = cKDTree(self.points)
        else:
            # any two points within distance < 1 share the first index
            order = np.argsort(self.points[:, 0], kind="stable")
            self.points = self.points[order]
            keys, starts = np.unique(self.points[:, 0], return_index=True)
            self._groups = dict(zip(keys.tolist(), np.append(starts, len(self.points))[:-1].tolist()))
            self._ends = dict(zip(keys.tolist(), np.append(starts[1:], len(self.points)).tolist()))

    def query(self, xs: np.ndarray) -> np.ndarray:
        xs = self.space.raw_many(xs)
        if self._tree is not None:
            p = np.inf if self.space.norm == "sup" else 2
            d, _ = self._tree.query(xs, k=1, p=p)
            return np.asarray(d, dtype=float)
        out = np.empty(len(xs))
        uniq, inverse = np.unique(xs, axis=0, return_inverse=True)
        inverse = np.asarray(inverse).ravel()
        res = np.empty(len(uniq))
        all_i = self.points[:, 0].astype(float)
        for idx, row in enumerate(uniq):
            i = int(row[0])
            if i in self._groups:
                block = self.points[self._groups[i]:self._ends[i]]
                res[idx] = self.space.distances(block, row).min()
            else:
                res[idx] = np.abs(all_i - i).min()
        out[:] = res[inverse]
        return out


class EmpiricalMeasure:
    """A finitely supported probability measure.

    ``points`` is a raw ``(m, dim)`` array in the encoding of ``space``;
    ``weights`` defaults to uniform and must sum to 1 within 1e-12.
    """

    def __init__(self, space: Space, points, weights=None, normalize: bool = False):
        self.space = space
        self.points = space.raw_many(points)
        m = len(self.points)
        if m == 0:
            raise MetricError("empirical measure needs at least one atom")
        if weights is None:
            w = np.full(m, 1.0 / m)
        else:
            w = np.asarray(weights, dtype=float).ravel()
            if w.shape != (m,):
                raise MetricError("weights must match the number of atoms")
            if np.any(w < 0) or not np.all(np.isfinite(w)):
                raise MetricError("weights must be finite and nonnegative")
            if normalize:
                w = w / w.sum()
        if abs(w.sum() - 1.0) > 1e-12:
            raise MetricError(f"weights sum to {w.sum()!r}, not 1")
        self.weights = w

    @classmethod
    def from_points(cls, points: Sequence[MetricPoint], weights=None,
                    norm: str = "sup") -> "EmpiricalMeasure":
        space = space_of(points[0], norm)
        return cls(space, space.raw_many(points), weights)

    @classmethod
    def dirac(cls, point: MetricPoint, norm: str = "sup") -> "EmpiricalMeasure":
        return cls.from_points([point], norm=norm)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())

    def atoms(self) -> list:
        return [(self.space.point(row), float(w)) for row, w in zip(self.points, self.weights)]

    def integrate(self, values: np.ndarray) -> float:
        return float(np.dot(self.weights, values))

    def mean(self) -> np.ndarray:
        if self.space.kind != "real":
            raise MetricError("mean is defined for real vectors only")
        return self.weights @ self.points

    def variance(self) -> np.ndarray:
        mu = self.mean()
        return self.weights @ (self.points - mu) ** 2

    def mass(self, mask: np.ndarray) -> float:
        return float(self.weights[np.asarray(mask, dtype=bool)].sum())

    def __repr__(self) -> str:
        return f"EmpiricalMeasure({self.space.tag}, atoms={len(self)})"


@dataclass
class TestFunction:
    """A bounded Lipschitz function with declared constants.

    ``fn`` receives a raw ``(m, dim)`` array if ``vectorized`` and a single
    MetricPoint otherwise.  Values are rescaled by
    ``1 / max(1, sup_norm, lipschitz)`` so the effective function satisfies
    ``|f| <= 1`` and ``Lip(f) <= 1``.
    """

    __test__ = False  # not a pytest class

    fn: Callable
    sup_norm: float = 1.0
    lipschitz: float = 1.0
    vectorized: bool = False
    label: str = "user"

    @property
    def scale(self) -> float:
        return 1.0 / max(1.0, self.sup_norm, self.lipschitz)

    def evaluate(self, space: Space, points: np.ndarray, scaled: bool = True) -> np.ndarray:
        if self.vectorized:
            vals = np.asarray(self.fn(points), dtype=float).reshape(len(points))
        else:
            vals = np.fromiter((self.fn(space.point(row)) for row in points),
                               dtype=float, count=len(points))
        return self.scale * vals if scaled else vals


def bump(space: Space, center: np.ndarray, width: float) -> TestFunction:
    """``min(1, s) * clamp(1 - distance(x, c) / s, 0, 1)``, Lipschitz <= 1."""
    center = np.array(center, copy=True)
    height = min(1.0, width)

    def f(pts):
        return height * np.clip(1.0 - space.distances(pts, center) / width, 0.0, 1.0)

    return TestFunction(f, sup_norm=height, lipschitz=height / width, vectorized=True,
                        label=f"bump(c={space.point(center)}, s={width:.6g})")


@dataclass
class TestFunctionDictionary:
    __test__ = False

    functions: list
    provenance: dict = field(default_factory=lambda: {"kind": "user-supplied"})

    def __len__(self) -> int:
        return len(self.functions)

    def values(self, measure: EmpiricalMeasure) -> np.ndarray:
        """``(len(dict),)`` vector of integrals of every function against ``measure``."""
        return np.array([measure.integrate(f.evaluate(measure.space, measure.points))
                         for f in self.functions])


def build_dictionary(measures: Sequence[EmpiricalMeasure], size: int = 64,
                     seed: int = 0, n_pairs: int = 4096) -> TestFunctionDictionary:
    """Seeded bump dictionary with centers drawn from the pooled atoms.

    Widths are quantiles of pooled pairwise distances (sampled pairs, zero
    distances dropped), spread evenly over levels 0.05..0.95.
    """
    if size < 1:
        raise ValueError("dictionary size must be >= 1")
    space = measures[0].space
    for mu in measures:
        if mu.space != space:
            raise MetricError("dictionary measures live on different spaces")
    pool = np.vstack([mu.points for mu in measures])
    rng = np.random.default_rng(seed)
    a = rng.integers(0, len(pool), n_pairs)
    b = rng.integers(0, len(pool), n_pairs)
    d = space.rowwise(pool[a], pool[b])
    d = d[d > 0]
    if len(d) == 0:
        widths = np.ones(size)
    else:
        widths = np.quantile(d, np.linspace(0.05, 0.95, size))
    centers = pool[rng.integers(0, len(pool), size)]
    order = rng.permutation(size)
    funcs = [bump(space, centers[t], float(widths[order[t]])) for t in range(size)]
    return TestFunctionDictionary(funcs, {
        "kind": "seeded-bumps", "size": size, "seed": int(seed),
        "pool_atoms": int(len(pool)), "width_min": float(widths.min()),
        "width_max": float(widths.max()), "space": space.tag,
    })


def _check_pair(mu: EmpiricalMeasure, nu: EmpiricalMeasure):
    if mu.space != nu.space:
        raise MetricError(f"measures on {mu.space.tag} and {nu.space.tag}")


def bl_distance(mu: EmpiricalMeasure, nu: EmpiricalMeasure,
                dictionary: TestFunctionDictionary) -> float:
    """Bounded-Lipschitz lower bound ``max_f |int f dmu - int f dnu|``."""
    _check_pair(mu, nu)
    if len(dictionary) == 0:
        raise ValueError("empty test-function dictionary")
    return float(min(2.0, np.max(np.abs(dictionary.values(mu) - dictionary.values(nu)))))


def mc_error_bound(m1: int, m2: int, size: int) -> float:
    """Sub-Gaussian scale of ``bl_distance`` between two independent samples
    of one law, for ``size`` functions with values in [0, 1]."""
    sigma = 0.5 * math.sqrt(1.0 / m1 + 1.0 / m2)
    return sigma * math.sqrt(2.0 * math.log(2.0 * size))


def lipschitz_estimate(f: Callable, pairs: Sequence, norm: str = "sup") -> float:
    """Largest difference quotient of ``f`` over the sampled pairs.

    Pairs at distance zero are skipped; if nothing is left a MetricError is
    raised.  The value is a lower bound on Lip(f).
    """
    best = None
    for a, b in pairs:
        if not isinstance(a, (RealVector, SeqState)):
            a, b = space_of_value(a), space_of_value(b)
        d = distance(a, b, norm)
        if d == 0:
            continue
        q = abs(f(a) - f(b)) / d
        best = q if best is None else max(best, q)
    if best is None:
        raise MetricError("all sample pairs are degenerate")
    return float(best)


def space_of_value(v) -> MetricPoint:
    if np.isscalar(v):
        return RealVector((v,))
    return RealVector(tuple(v))

