"""Command line runner: ``ergochain run <config.toml>`` and ``ergochain list``.

Exit codes: 0 PASS, 1 FAIL, 2 INCONCLUSIVE, 64 bad config, 65 invariant
violation (point outside the kernel's space, invalid probabilities, ...),
70 any other error.
"""

from __future__ import annotations

import argparse
import os
import sys
from typing import Callable, NamedTuple, Optional

import numpy as np

from . import __version__, counterexample as cx, diagnostics as dg
from .config import (ConfigError, ExperimentConfig, build_kernel, finite_float,
                     load_config, measure_from, pos_int, test_function, to_point)
from .ifs import IfsJumpProcess, LyapunovCertificate, validate_params
from .kernel import cesaro_measure, ensemble, invariance_residual
from .metric import build_dictionary, mc_error_bound
from .points import RealVector
from .report import DiagnosticReport, SeriesPoint, Verdict, dumps
from .rng import derive_seed

EXIT_CODES = {Verdict.PASS: 0, Verdict.FAIL: 1, Verdict.INCONCLUSIVE: 2}
EX_CONFIG = 64
EX_INVARIANT = 65
EX_SOFTWARE = 70


class Diagnostic(NamedTuple):
    signature: str
    run: Callable


def _pt(p, kernel, key, default=None):
    if key not in p:
        if default is None:
            raise ConfigError(f"diagnostic.params: missing field '{key}'")
        return default
    return to_point(p[key], kernel, f"diagnostic.params.{key}")


def _points(p, kernel, key):
    vals = p.get(key)
    if not isinstance(vals, list) or not vals:
        raise ConfigError(f"diagnostic.params.{key}: expected a nonempty array of points")
    return [to_point(v, kernel, f"diagnostic.params.{key}[{t}]") for t, v in enumerate(vals)]


def _cesaro_source(kernel, p, seed, threads, label):
    """Measure from ``mu`` (explicit atoms) or a Cesaro sample from ``x``."""
    if "mu" in p:
        return measure_from(p["mu"], kernel, "diagnostic.params.mu")
    x = _pt(p, kernel, "x")
    n = pos_int(p, "n", "diagnostic.params")
    m = pos_int(p, "m", "diagnostic.params")
    ens = ensemble(kernel, x, n, m, derive_seed(seed, label, "cesaro"), threads)
    return cesaro_measure(ens, n)


def _conf(p):
    c = finite_float(p, "confidence", "diagnostic.params", 0.95)
    if not 0 < c < 1:
        raise ConfigError("diagnostic.params.confidence: must lie in (0, 1)")
    return c


def _run_condition_E(kernel, p, seed, threads):
    return dg.estimate_condition_E(
        kernel, _pt(p, kernel, "x"), _pt(p, kernel, "z"),
        finite_float(p, "delta", "diagnostic.params"), pos_int(p, "n", "diagnostic.params"),
        pos_int(p, "m", "diagnostic.params"), seed, _conf(p), threads)


def _run_liminf(kernel, p, seed, threads):
    return dg.estimate_liminf_return(
        kernel, _points(p, kernel, "xs"), _pt(p, kernel, "z"),
        finite_float(p, "delta", "diagnostic.params"), pos_int(p, "n", "diagnostic.params"),
        pos_int(p, "m", "diagnostic.params"), seed, _conf(p), threads)


_V_FUNCS = {
    "sup_norm": lambda x0: (lambda x: float(max(abs(a - b) for a, b in zip(x.coords, x0.coords)))),
    "euclid_norm": lambda x0: (lambda x: float(np.sqrt(sum((a - b) ** 2
                                                             for a, b in zip(x.coords, x0.coords))))),
}


def _run_drift(kernel, p, seed, threads):
    cert_spec = p.get("certificate")
    if not isinstance(cert_spec, dict):
        raise ConfigError("diagnostic.params.certificate: expected a table")
    where = "diagnostic.params.certificate"
    x0 = to_point(cert_spec.get("x0", [0.0] * kernel.space.dim), kernel, f"{where}.x0")
    if not isinstance(x0, RealVector):
        raise ConfigError(f"{where}: drift certificates are supported on real spaces")
    vname = cert_spec.get("V", "sup_norm")
    if vname not in _V_FUNCS:
        raise ConfigError(f"{where}.V: choose from {', '.join(_V_FUNCS)}")
    cert = LyapunovCertificate(_V_FUNCS[vname](x0), finite_float(cert_spec, "lambda", where),
                               finite_float(cert_spec, "b", where),
                               finite_float(cert_spec, "R", where), x0,
                               f"{vname}(x - x0)")
    if "probes" in p:
        probes = _points(p, kernel, "probes")
    else:
        spec = p.get("random_probes")
        if not isinstance(spec, dict):
            raise ConfigError("diagnostic.params: give 'probes' or a 'random_probes' table")
        count = pos_int(spec, "count", "diagnostic.params.random_probes")
        lo = finite_float(spec, "low", "diagnostic.params.random_probes")
        hi = finite_float(spec, "high", "diagnostic.params.random_probes")
        rng = np.random.default_rng(derive_seed(seed, "drift_check", "probes"))
        probes = [RealVector(tuple(v)) for v in rng.uniform(lo, hi, (count, kernel.space.dim))]
    return dg.drift_check(kernel, cert, probes, pos_int(p, "m", "diagnostic.params"), seed,
                          threads)


def _run_equicontinuity(kernel, p, seed, threads):
    radii = p.get("radii")
    if not isinstance(radii, list) or not radii:
        raise ConfigError("diagnostic.params.radii: expected a nonempty array")
    return dg.equicontinuity_probe(
        kernel, test_function(p.get("f", "clamp01")), _pt(p, kernel, "z"),
        [float(r) for r in radii], pos_int(p, "n_max", "diagnostic.params"),
        pos_int(p, "m", "diagnostic.params"), seed,
        pos_int(p, "n_probes", "diagnostic.params", 4), threads)


def _run_tightness(kernel, p, seed, threads):
    q = p.get("quantile")
    return dg.tightness_probe(
        kernel, _pt(p, kernel, "z"), finite_float(p, "eps", "diagnostic.params"),
        pos_int(p, "n", "diagnostic.params"), pos_int(p, "m", "diagnostic.params"), seed,
        quantile=None if q is None else finite_float(p, "quantile", "diagnostic.params"),
        pilot_n=p.get("pilot_n"), confidence=_conf(p), threads=threads,
        j_window=p.get("j_window"))


def _run_stability(kernel, p, seed, threads):
    cps = p.get("checkpoints")
    return dg.stability_probe(
        kernel, measure_from(p.get("mu1"), kernel, "diagnostic.params.mu1"),
        measure_from(p.get("mu2"), kernel, "diagnostic.params.mu2"),
        pos_int(p, "n", "diagnostic.params"), pos_int(p, "m_per_atom", "diagnostic.params"),
        seed, checkpoints=cps, dict_size=pos_int(p, "dict_size", "diagnostic.params", 64),
        threads=threads)


def _run_mixing(kernel, p, seed, threads):
    alpha = finite_float(p, "alpha", "diagnostic.params")
    f_norm = finite_float(p, "f_norm", "diagnostic.params")
    eps = finite_float(p, "eps", "diagnostic.params")
    k = dg.mixing_bound_k(alpha, f_norm, eps)
    value = 4.0 * (1.0 - alpha / 2.0) ** k * f_norm
    return DiagnosticReport(
        condition_name="mixing_bound_k",
        inputs={"alpha": alpha, "f_norm": f_norm, "eps": eps},
        verdict=Verdict.PASS, threshold={"eps": eps},
        statistic={"k": k, "bound_at_k": value},
        series=[SeriesPoint(t, 4.0 * (1.0 - alpha / 2.0) ** t * f_norm,
                            4.0 * (1.0 - alpha / 2.0) ** t * f_norm,
                            4.0 * (1.0 - alpha / 2.0) ** t * f_norm) for t in range(k + 1)],
        notes=["deterministic computation; series is 4 (1 - alpha/2)^t ||f||"])


def _run_support(kernel, p, seed, threads):
    mu = _cesaro_source(kernel, p, seed, threads, "support_estimate")
    eps = finite_float(p, "eps", "diagnostic.params")
    reps = dg.support_estimate(mu, eps)
    return DiagnosticReport(
        condition_name="support_estimate",
        inputs={"kernel": kernel.describe(), "eps": eps, "atoms": len(mu), "seed": seed},
        verdict=Verdict.PASS, threshold={"eps": eps},
        statistic={"representatives": len(reps)},
        witnesses=[str(r) for r in reps],
        notes=["witnesses list the eps-net representatives in atom order"])


def _run_invariance(kernel, p, seed, threads):
    mu = _cesaro_source(kernel, p, seed, threads, "invariance_residual")
    mpa = pos_int(p, "m_per_atom", "diagnostic.params", 1)
    size = pos_int(p, "dict_size", "diagnostic.params", 64)
    dictionary = build_dictionary([mu], size=size, seed=derive_seed(seed, "dictionary"))
    res = invariance_residual(kernel, mu, dictionary, mpa, seed, threads)
    floor = 3.0 * mc_error_bound(len(mu), len(mu) * mpa, size)
    return DiagnosticReport(
        condition_name="invariance_residual",
        inputs={"kernel": kernel.describe(), "atoms": len(mu), "m_per_atom": mpa,
                "seed": seed, "dictionary": dictionary.provenance},
        verdict=Verdict.PASS if res <= floor else Verdict.FAIL,
        threshold={"residual_le": floor},
        statistic={"bl_distance_mu_muP": res, "noise_floor": floor},
        notes=["PASS iff the residual is within three Monte Carlo error scales"])


def _run_validate(kernel, p, seed, threads):
    if not isinstance(kernel, IfsJumpProcess):
        raise ConfigError("validate_params needs an IFS kernel")
    rng = np.random.default_rng(derive_seed(seed, "validate_params"))
    count = pos_int(p, "pairs", "diagnostic.params", 200)
    scale = finite_float(p, "scale", "diagnostic.params", 5.0)
    d = kernel.space.dim
    pairs = [(RealVector(tuple(a)), RealVector(tuple(b)))
             for a, b in zip(rng.uniform(-scale, scale, (count, d)),
                             rng.uniform(-scale, scale, (count, d)))]
    ts = p.get("ts", [0.0, 0.1, 0.5, 1.0, 2.0, 5.0])
    return validate_params(kernel, pairs, [float(t) for t in ts])


def _ce_ensemble(kernel, p, seed, threads, label):
    if not isinstance(kernel, cx.CExampleChain):
        raise ConfigError(f"{label} needs the counterexample kernel")
    start = _pt(p, kernel, "start", cx.SeqState(1, 1, 1))
    n = pos_int(p, "n", "diagnostic.params")
    m = pos_int(p, "m", "diagnostic.params")
    return ensemble(kernel, start, n, m, derive_seed(seed, label), threads), n


def _run_u0(kernel, p, seed, threads):
    ens, n = _ce_ensemble(kernel, p, seed, threads, "u0_visit_frequency")
    return cx.u0_visit_frequency(ens, burn_in=int(p.get("burn_in", n // 10)),
                                 confidence=_conf(p))


def _run_escape(kernel, p, seed, threads):
    ens, n = _ce_ensemble(kernel, p, seed, threads, "escape_statistics")
    return cx.escape_statistics(ens, int(p.get("j_window", max(1, n // 10))))


def _run_z_return(kernel, p, seed, threads):
    if not isinstance(kernel, cx.CExampleChain):
        raise ConfigError("z_return_probe needs the counterexample kernel")
    return cx.z_return_probe(kernel, _pt(p, kernel, "start", cx.SeqState(1, 1, 1)),
                             finite_float(p, "radius", "diagnostic.params"),
                             pos_int(p, "n", "diagnostic.params"),
                             pos_int(p, "m", "diagnostic.params"), seed,
                             confidence=_conf(p), threads=threads)


DIAGNOSTICS = {
    "estimate_condition_E": Diagnostic("x, z, delta, n, m, confidence=0.95", _run_condition_E),
    "estimate_liminf_return": Diagnostic("xs, z, delta, n, m, confidence=0.95", _run_liminf),
    "drift_check": Diagnostic("certificate{V, lambda, b, R, x0}, probes | random_probes, m",
                              _run_drift),
    "equicontinuity_probe": Diagnostic("f, z, radii, n_max, m, n_probes=4",
                                       _run_equicontinuity),
    "tightness_probe": Diagnostic("z, eps, n, m, quantile=1-eps/2, pilot_n=n/4",
                                  _run_tightness),
    "stability_probe": Diagnostic("mu1, mu2, n, m_per_atom, checkpoints, dict_size=64",
                                  _run_stability),
    "mixing_bound_k": Diagnostic("alpha, f_norm, eps", _run_mixing),
    "support_estimate": Diagnostic("eps, mu | (x, n, m)", _run_support),
    "invariance_residual": Diagnostic("mu | (x, n, m), m_per_atom=1, dict_size=64",
                                      _run_invariance),
    "validate_params": Diagnostic("pairs=200, scale=5, ts", _run_validate),
    "u0_visit_frequency": Diagnostic("start, n, m, burn_in=n/10", _run_u0),
    "escape_statistics": Diagnostic("start, n, m, j_window=n/10", _run_escape),
    "z_return_probe": Diagnostic("start, radius, n, m", _run_z_return),
}

KERNEL_TABLE = [
    ("DYADIC", "real1", "x/2, x/2 + 1/2 with p = 1/2; uniform invariant law"),
    ("DECAY2D", "real2", "three affine maps, exp(-t) flow, place-dependent p"),
    ("POINT", "real1", "x -> x/2; invariant law delta_0"),
    ("COUNTEREXAMPLE", "seq", "(i, j, k) chain; mode = patched | literal"),
]


def list_builtins() -> str:
    lines = ["kernels:"]
    lines += [f"  {n:<16}{s:<7}{d}" for n, s, d in KERNEL_TABLE]
    lines.append("diagnostics:")
    lines += [f"  {n:<24}{d.signature}" for n, d in DIAGNOSTICS.items()]
    return "\n".join(lines) + "\n"


def _write(path: str, text: str):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def execute(cfg: ExperimentConfig, output: str, threads: int,
            mode: Optional[str] = None) -> Verdict:
    kernel = build_kernel(cfg.kernel, mode)
    if cfg.diagnostic not in DIAGNOSTICS:
        raise ConfigError(f"diagnostic.name: unknown diagnostic {cfg.diagnostic!r}")
    report = DIAGNOSTICS[cfg.diagnostic].run(kernel, cfg.params, cfg.seed, threads)
    os.makedirs(output, exist_ok=True)
    _write(os.path.join(output, "report.json"), report.to_json())
    _write(os.path.join(output, "series.csv"), report.series_csv())
    echo = cfg.echo()
    if mode is not None:
        echo["kernel"] = dict(echo["kernel"], mode=mode)
    _write(os.path.join(output, "manifest.json"),
           dumps({"artifact": "ergochain", "version": __version__, "seed": cfg.seed,
                  "config": echo}))
    return report.verdict


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ergochain", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one experiment config")
    run.add_argument("config", help="TOML experiment file")
    run.add_argument("--threads", type=int, default=None, help="worker threads")
    run.add_argument("--output", default=None, help="output directory")
    run.add_argument("--mode", choices=["patched", "literal"], default=None,
                     help="counterexample mode override")
    run.add_argument("--seed", type=int, default=None, help="seed override")
    run.add_argument("--p2-offset", type=int, default=None, dest="p2_offset",
                     help="counterexample p2 offset override (patched mode)")
    sub.add_parser("list", help="list built-in kernels and diagnostics")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list":
        sys.stdout.write(list_builtins())
        return 0
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be nonnegative")
            cfg.seed = args.seed
        threads = args.threads if args.threads is not None else cfg.threads
        if threads < 1:
            raise ConfigError("--threads must be >= 1")
        output = args.output or cfg.output or "ergochain-out"
        if args.p2_offset is not None:
            if args.p2_offset < 0:
                raise ConfigError("--p2-offset must be nonnegative")
            cfg.kernel = dict(cfg.kernel, p2_offset=args.p2_offset)
        verdict = execute(cfg, output, threads, args.mode)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EX_CONFIG
    except ValueError as exc:
        # MetricError, ParameterError, ProbabilityVectorError, InvalidCellError and
        # precondition failures of the diagnostics
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EX_INVARIANT
    except Exception as exc:  # noqa: BLE001 - map to EX_SOFTWARE
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EX_SOFTWARE
    print(f"{cfg.diagnostic}: {verdict.value} -> {output}")
    return EXIT_CODES[verdict]


if __name__ == "__main__":
    sys.exit(main())
