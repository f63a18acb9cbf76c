"""Experiment configuration: TOML parsing, validation and object construction.

Grammar (all keys lower case)::

    seed = 42                      # required integer
    output = "out/dyadic"          # optional, overridden by --output
    threads = 1                    # optional, overridden by --threads

    [kernel]
    builtin = "DYADIC"             # DYADIC | DECAY2D | POINT | COUNTEREXAMPLE
    # or type = "affine_ifs" with matrices, offsets, p_base, p_slope, p_clip,
    #    rate, center, gamma, r, a, kappa, norm
    # or type = "counterexample" with mode = "patched" | "literal", p2_offset

    [diagnostic]
    name = "estimate_condition_E"

    [diagnostic.params]
    x = [0.0]
    z = [0.5]
    delta = 0.1
    n = 10000
    m = 100

A ``manifest.json`` written by a previous run is accepted in place of the
TOML file and replays that run.

Real points are arrays of floats; sequence states are ``[i, j, k]`` with
``k = "inf"`` allowed.
"""

from __future__ import annotations

import json
import math
import sys
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .counterexample import CExampleChain, Mode
from .ifs import AffineIfs, builtin_processes
from .kernel import Kernel
from .metric import EmpiricalMeasure, TestFunction
from .points import INFINITY, MetricPoint, RealVector, SeqState

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "parse_config", "config_from_dict",
           "build_kernel", "BUILTIN_KERNELS", "TEST_FUNCTIONS", "to_point"]

BUILTIN_KERNELS = ("DYADIC", "DECAY2D", "POINT", "COUNTEREXAMPLE")


class ConfigError(ValueError):
    """Unparseable or structurally invalid configuration (exit code 64)."""


@dataclass
class ExperimentConfig:
    seed: int
    kernel: dict
    diagnostic: str
    params: dict = field(default_factory=dict)
    output: Optional[str] = None
    threads: int = 1
    source: dict = field(default_factory=dict)

    def echo(self) -> dict:
        """Canonical form written to the run manifest."""
        return {"seed": self.seed, "kernel": self.kernel,
                "diagnostic": {"name": self.diagnostic, "params": self.params}}


def _require(table: dict, key: str, where: str, kind=None):
    if key not in table:
        raise ConfigError(f"{where}: missing field '{key}'")
    val = table[key]
    if kind is not None and not isinstance(val, kind) or isinstance(val, bool) and kind is int:
        raise ConfigError(f"{where}.{key}: expected {getattr(kind, '__name__', kind)}, "
                          f"got {type(val).__name__}")
    return val


def parse_config(text: str) -> ExperimentConfig:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"TOML syntax error: {exc}") from None
    return config_from_dict(doc)


def config_from_dict(doc: dict) -> ExperimentConfig:
    seed = _require(doc, "seed", "config", int)
    if seed < 0:
        raise ConfigError("config.seed: must be nonnegative")
    kernel = _require(doc, "kernel", "config", dict)
    diag = _require(doc, "diagnostic", "config", dict)
    name = _require(diag, "name", "diagnostic", str)
    params = diag.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError("diagnostic.params: expected a table")
    threads = doc.get("threads", 1)
    if not isinstance(threads, int) or isinstance(threads, bool) or threads < 1:
        raise ConfigError("config.threads: expected a positive integer")
    output = doc.get("output")
    if output is not None and not isinstance(output, str):
        raise ConfigError("config.output: expected a string")
    unknown = set(doc) - {"seed", "kernel", "diagnostic", "output", "threads"}
    if unknown:
        raise ConfigError(f"config: unknown field(s) {sorted(unknown)}")
    return ExperimentConfig(seed, kernel, name, params, output, threads, doc)


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError:
        raise ConfigError(f"{path}: not UTF-8 text") from None
    if path.endswith(".json"):
        # a run manifest: replay its config echo
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: JSON syntax error: {exc}") from None
        if not isinstance(doc, dict) or not isinstance(doc.get("config"), dict):
            raise ConfigError(f"{path}: not a run manifest (no 'config' table)")
        return config_from_dict(doc["config"])
    return parse_config(text)


def build_kernel(spec: dict, mode_override: Optional[str] = None) -> Kernel:
    if "builtin" in spec:
        name = spec["builtin"]
        if name not in BUILTIN_KERNELS:
            raise ConfigError(f"kernel.builtin: unknown kernel {name!r}; "
                              f"choose from {', '.join(BUILTIN_KERNELS)}")
        if name == "COUNTEREXAMPLE":
            kind = "counterexample"
        else:
            if mode_override is not None or "mode" in spec or "p2_offset" in spec:
                raise ConfigError("mode and p2_offset apply to counterexample kernels only")
            return builtin_processes()[name]
    else:
        kind = _require(spec, "type", "kernel", str)
    if kind == "counterexample":
        mode = mode_override or spec.get("mode", "patched")
        try:
            mode = Mode(mode)
        except ValueError:
            raise ConfigError(f"kernel.mode: expected 'patched' or 'literal', got {mode!r}") from None
        offset = spec.get("p2_offset", 1)
        if not isinstance(offset, int) or isinstance(offset, bool) or offset < 0:
            raise ConfigError("kernel.p2_offset: expected a nonnegative integer")
        return CExampleChain(mode, p2_offset=offset)
    if mode_override is not None:
        raise ConfigError("--mode applies to counterexample kernels only")
    if kind != "affine_ifs":
        raise ConfigError(f"kernel.type: unknown type {kind!r}")
    try:
        return AffineIfs(
            name=str(spec.get("name", "AFFINE")),
            matrices=_require(spec, "matrices", "kernel", list),
            offsets=_require(spec, "offsets", "kernel", list),
            p_base=_require(spec, "p_base", "kernel", list),
            p_slope=spec.get("p_slope"),
            p_clip=float(spec.get("p_clip", 1.0)),
            rate=float(spec.get("rate", 0.0)),
            center=spec.get("center"),
            gamma=float(_require(spec, "gamma", "kernel")),
            r=float(_require(spec, "r", "kernel")),
            a=float(spec.get("a", 0.0)),
            kappa=float(spec.get("kappa", 0.0)),
            norm=str(spec.get("norm", "sup")),
        )
    except (TypeError, IndexError) as exc:
        raise ConfigError(f"kernel: malformed affine IFS definition ({exc})") from None


def to_point(value: Any, kernel: Kernel, where: str) -> MetricPoint:
    """Coerce a config value to a point of the kernel's space."""
    space = kernel.space
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        value = [value]
    if not isinstance(value, list):
        raise ConfigError(f"{where}: expected a point (array), got {type(value).__name__}")
    if space.kind == "seq":
        if len(value) != 3:
            raise ConfigError(f"{where}: sequence states are [i, j, k]")
        k = value[2]
        if isinstance(k, str):
            if k.lower() not in ("inf", "infinity"):
                raise ConfigError(f"{where}: k must be an integer or \"inf\"")
            k = INFINITY
        if not all(isinstance(v, int) and not isinstance(v, bool) for v in value[:2]):
            raise ConfigError(f"{where}: i and j must be integers")
        return SeqState(value[0], value[1], k)
    if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
        raise ConfigError(f"{where}: real coordinates must be numbers")
    return RealVector(tuple(float(v) for v in value))


def _clamp01(pts):
    return np.clip(pts[:, 0], 0.0, 1.0)


def _tanh0(pts):
    return np.tanh(pts[:, 0])


def _seq_tail(pts):
    k = pts[:, 2].astype(float)
    return np.where(pts[:, 0] == 1, np.exp2(-k), 0.0)


# named bounded Lipschitz test functions for config files
TEST_FUNCTIONS = {
    "clamp01": lambda: TestFunction(_clamp01, 1.0, 1.0, True, "clamp(x_1, 0, 1)"),
    "tanh": lambda: TestFunction(_tanh0, 1.0, 1.0, True, "tanh(x_1)"),
    "seq_tail": lambda: TestFunction(_seq_tail, 0.5, 1.0, True, "1[i=1] 2^-k"),
}


def test_function(name: str) -> TestFunction:
    if name not in TEST_FUNCTIONS:
        raise ConfigError(f"diagnostic.params.f: unknown test function {name!r}; "
                          f"choose from {', '.join(TEST_FUNCTIONS)}")
    return TEST_FUNCTIONS[name]()


test_function.__test__ = False


def measure_from(spec: Any, kernel: Kernel, where: str) -> EmpiricalMeasure:
    """``{points = [...], weights = [...]}`` or a single point (Dirac mass)."""
    if isinstance(spec, dict):
        pts = _require(spec, "points", where, list)
        if not pts:
            raise ConfigError(f"{where}.points: empty")
        points = [to_point(p, kernel, f"{where}.points[{t}]") for t, p in enumerate(pts)]
        weights = spec.get("weights")
    else:
        points, weights = [to_point(spec, kernel, where)], None
    space = kernel.space
    return EmpiricalMeasure(space, space.raw_many(points), weights)


def finite_float(table: dict, key: str, where: str, default=None) -> float:
    if key not in table:
        if default is None:
            raise ConfigError(f"{where}: missing field '{key}'")
        return default
    v = table[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{where}.{key}: expected a finite number")
    return float(v)


def pos_int(table: dict, key: str, where: str, default=None) -> int:
    if key not in table:
        if default is None:
            raise ConfigError(f"{where}: missing field '{key}'")
        return default
    v = table[key]
    if isinstance(v, bool) or not isinstance(v, int) or v < 1:
        raise ConfigError(f"{where}.{key}: expected a positive integer")
    return v
