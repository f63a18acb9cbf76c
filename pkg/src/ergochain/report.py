"""Diagnostic reports and their JSON / CSV serializations."""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import dataclass, field
from typing import Any, NamedTuple

import numpy as np

SCHEMA = "ergochain-report/1"

__all__ = ["SCHEMA", "Verdict", "SeriesPoint", "DiagnosticReport", "EquicontinuityReport",
           "verdict_positive", "verdict_at_least", "to_jsonable", "dumps"]


class Verdict(str, enum.Enum):
    PASS = "PASS"
    FAIL = "FAIL"
    INCONCLUSIVE = "INCONCLUSIVE"


class SeriesPoint(NamedTuple):
    n: int
    estimate: float
    ci_low: float
    ci_high: float


def verdict_positive(ci_low: float, ci_high: float, threshold: float = 0.0) -> Verdict:
    """Is the quantity strictly above ``threshold``?  INCONCLUSIVE iff the CI
    straddles it."""
    if ci_low > threshold:
        return Verdict.PASS
    if ci_low < threshold < ci_high:
        return Verdict.INCONCLUSIVE
    return Verdict.FAIL


def verdict_at_least(ci_low: float, ci_high: float, threshold: float) -> Verdict:
    """Is the quantity at least ``threshold``?"""
    if ci_low >= threshold:
        return Verdict.PASS
    if ci_high < threshold:
        return Verdict.FAIL
    return Verdict.INCONCLUSIVE


def to_jsonable(obj: Any):
    """Recursively convert numpy scalars/arrays, enums and tuples for json."""
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        if hasattr(obj, "_asdict"):
            return to_jsonable(obj._asdict())
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    return obj


def dumps(obj: Any) -> str:
    return json.dumps(to_jsonable(obj), indent=2, sort_keys=False, allow_nan=False) + "\n"


@dataclass
class DiagnosticReport:
    condition_name: str
    inputs: dict
    verdict: Verdict
    threshold: Any = None
    statistic: dict = field(default_factory=dict)
    series: list = field(default_factory=list)
    witnesses: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    extra_series: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "condition_name": self.condition_name,
            "verdict": self.verdict,
            "threshold": self.threshold,
            "statistic": self.statistic,
            "inputs": self.inputs,
            "series": [p._asdict() for p in self.series],
            "extra_series": {k: [p._asdict() for p in v] for k, v in self.extra_series.items()},
            "witnesses": self.witnesses,
            "notes": self.notes,
        }

    def to_json(self) -> str:
        return dumps(self.to_dict())

    def series_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "estimate", "ci_low", "ci_high"])
        for p in self.series:
            w.writerow([int(p.n), repr(float(p.estimate)), repr(float(p.ci_low)),
                        repr(float(p.ci_high))])
        return buf.getvalue()

    @property
    def passed(self) -> bool:
        return self.verdict == Verdict.PASS


@dataclass
class EquicontinuityReport:
    """``|P^n f(z) - P^n f(y)|`` over radii x horizons, with standard errors.

    ``matrix[r][n]`` is the largest gap over the probe points at radius
    ``radii[r]``; ``stderr`` is the standard error of that entry.
    """

    center: str
    radii: list
    horizons: list
    matrix: np.ndarray
    stderr: np.ndarray
    modulus: list
    modulus_stderr: list
    verdict: Verdict
    inputs: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    probes: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "condition_name": "equicontinuity_probe",
            "verdict": self.verdict,
            "center": self.center,
            "radii": self.radii,
            "horizons": self.horizons,
            "matrix": self.matrix,
            "stderr": self.stderr,
            "modulus": self.modulus,
            "modulus_stderr": self.modulus_stderr,
            "inputs": self.inputs,
            "probes": self.probes,
            "notes": self.notes,
        }

    def to_json(self) -> str:
        return dumps(self.to_dict())

    @property
    def series(self) -> list:
        """Modulus per radius, as ``(index, modulus, -2se, +2se)`` rows."""
        return [SeriesPoint(i, m, max(0.0, m - 2 * s), m + 2 * s)
                for i, (m, s) in enumerate(zip(self.modulus, self.modulus_stderr))]

    def series_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "estimate", "ci_low", "ci_high"])
        for p in self.series:
            w.writerow([int(p.n), repr(float(p.estimate)), repr(float(p.ci_low)),
                        repr(float(p.ci_high))])
        return buf.getvalue()
