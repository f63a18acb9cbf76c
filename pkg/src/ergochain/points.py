"""State-space points and the raw array encoding used by simulations."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

INFINITY = math.inf
# raw-array stand-in for k = INFINITY; 2**-K_INF underflows to 0.0
K_INF = 2 ** 62


class MetricError(ValueError):
    """Points from different spaces (or dimensions) were combined."""


@dataclass(frozen=True)
class RealVector:
    coords: tuple

    def __post_init__(self):
        coords = tuple(float(c) for c in self.coords)
        if not coords:
            raise MetricError("RealVector needs at least one coordinate")
        if not all(math.isfinite(c) for c in coords):
            raise MetricError(f"non-finite coordinate in {coords}")
        object.__setattr__(self, "coords", coords)

    @property
    def dim(self) -> int:
        return len(self.coords)

    def __str__(self) -> str:
        return "(" + ", ".join(repr(c) for c in self.coords) + ")"


@dataclass(frozen=True)
class SeqState:
    """Index ``(i, j, k)`` of the point x(i, j, k) of the sequence space."""

    i: int
    j: int
    k: Union[int, float]

    def __post_init__(self):
        if int(self.i) != self.i or self.i < 1:
            raise MetricError(f"SeqState.i must be a positive integer, got {self.i}")
        if int(self.j) != self.j or self.j < 1:
            raise MetricError(f"SeqState.j must be a positive integer, got {self.j}")
        k = self.k
        if k == INFINITY or k >= K_INF:
            object.__setattr__(self, "k", INFINITY)
        elif int(k) != k or k < 1:
            raise MetricError(f"SeqState.k must be >= 1 or INFINITY, got {k}")
        else:
            object.__setattr__(self, "k", int(k))
        object.__setattr__(self, "i", int(self.i))
        object.__setattr__(self, "j", int(self.j))

    @property
    def finite(self) -> bool:
        return self.k != INFINITY

    def __str__(self) -> str:
        k = "inf" if self.k == INFINITY else str(self.k)
        return f"({self.i},{self.j},{k})"


MetricPoint = Union[RealVector, SeqState]


@dataclass(frozen=True)
class Space:
    """A state-space variant: real vectors of fixed ``dim`` or sequence states.

    ``norm`` selects the metric on real vectors (``"sup"`` or ``"euclid"``).
    """

    kind: str = "real"
    dim: int = 1
    norm: str = "sup"

    def __post_init__(self):
        if self.kind not in ("real", "seq"):
            raise MetricError(f"unknown space kind {self.kind!r}")
        if self.norm not in ("sup", "euclid"):
            raise MetricError(f"unknown norm {self.norm!r}")
        if self.kind == "seq":
            object.__setattr__(self, "dim", 3)
        elif self.dim < 1:
            raise MetricError("dimension must be >= 1")

    @property
    def dtype(self):
        return np.int64 if self.kind == "seq" else np.float64

    @property
    def tag(self) -> str:
        return "seq" if self.kind == "seq" else f"real{self.dim}"

    def point(self, value) -> MetricPoint:
        """Coerce a MetricPoint, scalar, sequence or raw row into a point of this space."""
        if isinstance(value, RealVector):
            if self.kind != "real" or value.dim != self.dim:
                raise MetricError(f"{value} is not a point of {self.tag}")
            return value
        if isinstance(value, SeqState):
            if self.kind != "seq":
                raise MetricError(f"{value} is not a point of {self.tag}")
            return value
        if self.kind == "seq":
            i, j, k = (value.tolist() if isinstance(value, np.ndarray) else value)
            return SeqState(i, j, INFINITY if k == K_INF else k)
        if np.isscalar(value):
            value = (value,)
        pt = RealVector(tuple(np.asarray(value, dtype=float).ravel().tolist()))
        if pt.dim != self.dim:
            raise MetricError(f"expected dimension {self.dim}, got {pt.dim}")
        return pt

    def raw(self, value) -> np.ndarray:
        pt = self.point(value)
        if isinstance(pt, SeqState):
            return np.array([pt.i, pt.j, K_INF if pt.k == INFINITY else pt.k], dtype=np.int64)
        return np.array(pt.coords, dtype=np.float64)

    def raw_many(self, values) -> np.ndarray:
        if isinstance(values, np.ndarray) and values.ndim == 2:
            if values.shape[1] != self.dim:
                raise MetricError(f"expected rows of length {self.dim}")
            return np.ascontiguousarray(values, dtype=self.dtype)
        rows = [self.raw(v) for v in values]
        if not rows:
            return np.empty((0, self.dim), dtype=self.dtype)
        return np.vstack(rows)

    def distances(self, points: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Distances from every row of ``points`` to the raw point ``y``."""
        return self.rowwise(points, np.broadcast_to(y, points.shape))

    def rowwise(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        if self.kind == "seq":
            from .counterexample import seq_distance_raw
            return seq_distance_raw(a, b)
        diff = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))
        if self.norm == "sup":
            return diff.max(axis=-1)
        return np.sqrt((diff * diff).sum(axis=-1))


def space_of(point: MetricPoint, norm: str = "sup") -> Space:
    if isinstance(point, SeqState):
        return Space("seq")
    if isinstance(point, RealVector):
        return Space("real", point.dim, norm)
    raise MetricError(f"not a MetricPoint: {point!r}")


def as_points(values: Sequence) -> list:
    return [v if isinstance(v, (RealVector, SeqState)) else RealVector(
        (v,) if np.isscalar(v) else tuple(v)) for v in values]
