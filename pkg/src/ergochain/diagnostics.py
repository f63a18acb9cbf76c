"""Monte Carlo checks of return, tightness, drift, equicontinuity and
stability conditions for a kernel.

Limits over infinite horizons cannot be simulated; every liminf/limsup is
replaced by the min/max over the final quarter of the horizon grid, and a
verdict is INCONCLUSIVE whenever the confidence interval straddles the
threshold.  Open sets are balls only.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np

from .counterexample import _running_mean_ci, escape_statistics
from .ifs import LyapunovCertificate
from .kernel import (Kernel, ensemble, propagate, run_from, wilson_arrays)
from .metric import (EmpiricalMeasure, FiniteSetIndex, TestFunction,
                     TestFunctionDictionary, bl_distance, build_dictionary,
                     mc_error_bound)
from .points import K_INF, Space
from .report import (DiagnosticReport, EquicontinuityReport, SeriesPoint, Verdict,
                     verdict_at_least, verdict_positive)
from .rng import derive_seed

__all__ = [
    "estimate_condition_E", "estimate_liminf_return", "drift_check",
    "equicontinuity_probe", "tightness_probe", "stability_probe", "mixing_bound_k",
    "support_estimate", "final_quarter_start", "report_grid",
]

BALLS_ONLY = "open sets are checked as balls only"


def final_quarter_start(n: int) -> int:
    """0-based index where the final quarter of ``1..n`` begins."""
    return n - max(1, n // 4)


def report_grid(n: int, size: int = 400) -> list:
    """Increasing 1-based horizons: a geometric and a linear grid merged, ending at ``n``."""
    if n <= size:
        return list(range(1, n + 1))
    g = np.unique(np.concatenate([
        np.geomspace(1, n, size // 2).astype(int),
        np.linspace(1, n, size // 2).astype(int), [n]]))
    return g.tolist()


def _ball_hits(space: Space, arr: np.ndarray, z_raw: np.ndarray, delta: float) -> np.ndarray:
    m, n, d = arr.shape
    dist = space.distances(arr.reshape(m * n, d), z_raw)
    return (dist < delta).reshape(m, n)


def estimate_condition_E(kernel: Kernel, x, z, delta: float, n: int, m: int, seed: int,
                         confidence: float = 0.95, threads: int = 1) -> DiagnosticReport:
    """Running Cesaro averages of ``P^i(x, B(z, delta))``; PASS iff the
    limsup proxy (max over the final quarter) has CI lower bound > 0."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    if n < 1 or m < 1:
        raise ValueError("n and m must be >= 1")
    space = kernel.space
    z_raw = space.raw(z)
    ens = ensemble(kernel, x, n, m, derive_seed(seed, "estimate_condition_E"), threads)
    hits = _ball_hits(space, ens.array, z_raw, delta)
    est, lo, hi = _running_mean_ci(hits.astype(float), confidence)
    q = final_quarter_start(n)
    t = q + int(np.argmax(est[q:]))
    series = [SeriesPoint(g, float(est[g - 1]), float(lo[g - 1]), float(hi[g - 1]))
              for g in report_grid(n)]
    return DiagnosticReport(
        condition_name="estimate_condition_E",
        inputs={"kernel": kernel.describe(), "x": str(space.point(x)), "z": str(space.point(z)),
                "delta": delta, "n": n, "m": m, "seed": seed, "confidence": confidence},
        verdict=verdict_positive(float(lo[t]), float(hi[t]), 0.0),
        threshold={"ci_low_gt": 0.0},
        statistic={"limsup_proxy": float(est[t]), "ci_low": float(lo[t]),
                   "ci_high": float(hi[t]), "at_n": t + 1, "final": float(est[-1])},
        series=series,
        notes=[BALLS_ONLY, "limsup proxy = max over the final quarter of horizons"],
    )


def estimate_liminf_return(kernel: Kernel, xs: Sequence, z, delta: float, n: int, m: int,
                           seed: int, confidence: float = 0.95,
                           threads: int = 1) -> DiagnosticReport:
    """Per-step ``P^n(x, B(z, delta))`` for each start; liminf proxy is the
    min over the final quarter, and the uniform level is the min over starts."""
    if len(xs) == 0:
        raise ValueError("need at least one start point")
    if not delta > 0:
        raise ValueError("delta must be positive")
    space = kernel.space
    z_raw = space.raw(z)
    q = final_quarter_start(n)
    per_x = []
    profiles = []
    for idx, x in enumerate(xs):
        ens = ensemble(kernel, x, n, m, derive_seed(seed, "estimate_liminf_return", idx), threads)
        counts = _ball_hits(space, ens.array, z_raw, delta).sum(axis=0)
        p, lo, hi = wilson_arrays(counts, m, confidence)
        t = q + int(np.argmin(p[q:]))
        per_x.append({"x": str(space.point(x)), "liminf_proxy": float(p[t]),
                      "ci_low": float(lo[t]), "ci_high": float(hi[t]), "at_n": t + 1,
                      "verdict": verdict_positive(float(lo[t]), float(hi[t]), 0.0)})
        profiles.append((p, lo, hi))
    worst = min(range(len(xs)), key=lambda i: (per_x[i]["liminf_proxy"], i))
    alpha = per_x[worst]
    stacked = np.stack([pr[0] for pr in profiles])
    arg = np.argmin(stacked, axis=0)
    lo_all = np.stack([pr[1] for pr in profiles])
    hi_all = np.stack([pr[2] for pr in profiles])
    series = [SeriesPoint(g, float(stacked[arg[g - 1], g - 1]), float(lo_all[arg[g - 1], g - 1]),
                          float(hi_all[arg[g - 1], g - 1])) for g in report_grid(n)]
    return DiagnosticReport(
        condition_name="estimate_liminf_return",
        inputs={"kernel": kernel.describe(), "xs": [str(space.point(x)) for x in xs],
                "z": str(space.point(z)), "delta": delta, "n": n, "m": m, "seed": seed,
                "confidence": confidence},
        verdict=verdict_positive(alpha["ci_low"], alpha["ci_high"], 0.0),
        threshold={"ci_low_gt": 0.0},
        statistic={"alpha_hat": alpha["liminf_proxy"], "ci_low": alpha["ci_low"],
                   "ci_high": alpha["ci_high"], "worst_start": alpha["x"], "per_start": per_x},
        series=series,
        notes=[BALLS_ONLY, "series is the min over starts of P^n(x, B(z, delta))"],
    )


def drift_check(kernel: Kernel, cert: LyapunovCertificate, probes: Sequence, m: int,
                seed: int, threads: int = 1) -> DiagnosticReport:
    """Monte Carlo ``PV(x)`` at each probe against ``lambda V(x) + b 1_B(x0, R)(x)``.

    A probe violates iff ``estimate - 3 se > bound`` and passes with margin iff
    ``estimate + 3 se <= bound``.
    """
    if len(probes) == 0:
        raise ValueError("need at least one probe point")
    if m < 30:
        raise ValueError("drift_check needs m >= 30")
    if not 0 < cert.lam < 1:
        raise ValueError("drift coefficient must lie in (0, 1)")
    space = kernel.space
    x0 = space.raw(cert.x0)
    rows, witnesses, series = [], [], []
    margin_all = True
    for p, probe in enumerate(probes):
        x = space.raw(probe)
        starts = np.repeat(x[None, :], m, axis=0)
        nxt = run_from(kernel, starts, 1, derive_seed(seed, "drift_check", p),
                       np.arange(m), threads)[:, 0, :]
        vals = np.array([float(cert.V(space.point(row))) for row in nxt])
        est = float(vals.mean())
        se = float(vals.std(ddof=1) / math.sqrt(m))
        v_x = float(cert.V(space.point(x)))
        dist = float(space.distances(x[None, :], x0)[0])
        bound = cert.bound(v_x, dist)
        row = {"probe": str(space.point(x)), "PV_hat": est, "stderr": se, "V": v_x,
               "bound": bound, "in_ball": dist < cert.R}
        rows.append(row)
        series.append(SeriesPoint(p, est, est - 3 * se, est + 3 * se))
        if est - 3 * se > bound:
            witnesses.append(row)
        elif est + 3 * se > bound:
            margin_all = False
    if witnesses:
        verdict = Verdict.FAIL
    elif margin_all:
        verdict = Verdict.PASS
    else:
        verdict = Verdict.INCONCLUSIVE
    ratios = [r["PV_hat"] / r["V"] for r in rows if r["V"] > 0]
    return DiagnosticReport(
        condition_name="drift_check",
        inputs={"kernel": kernel.describe(), "certificate": cert.describe(),
                "probes": len(probes), "m": m, "seed": seed},
        verdict=verdict,
        threshold={"violation": "PV_hat - 3se > lambda V + b 1_B",
                   "margin": "PV_hat + 3se <= lambda V + b 1_B"},
        statistic={"violations": len(witnesses), "stationary_bound": cert.b / (1.0 - cert.lam),
                   "max_ratio_PV_over_V": max(ratios) if ratios else None,
                   "per_probe": rows},
        series=series,
        witnesses=witnesses,
        notes=["series index is the probe number; interval is estimate +- 3 se"],
    )


def _probe_points(space: Space, z_raw: np.ndarray, r: float, count: int,
                  rng: np.random.Generator) -> list:
    """Deterministic points at distance in [r/2, r] from ``z``."""
    pts = []
    if space.kind == "real":
        d = space.dim
        for p in range(count):
            v = rng.uniform(-1.0, 1.0, d)
            if space.norm == "sup":
                q = int(rng.integers(d))
                v[q] = 1.0 if p % 2 == 0 else -1.0
            else:
                v = v / np.linalg.norm(v)
                if p % 2:
                    v = -v
            s = rng.uniform(0.5 * r, r)
            pts.append(z_raw + s * v)
        return pts
    # sequence space: search small index perturbations of z
    i, j, k = (int(v) for v in z_raw)
    cands = []
    kz = K_INF if k >= K_INF else k
    for dj in range(0, 4):
        for kk in list(range(1, 64)) + [K_INF]:
            cand = np.array([i, j + dj, kk], dtype=np.int64)
            dist = float(space.distances(cand[None, :], z_raw)[0])
            if 0.5 * r <= dist <= r and not (dj == 0 and kk == kz):
                cands.append(cand)
    if not cands:
        return []
    pick = rng.permutation(len(cands))[:count]
    return [cands[t] for t in sorted(pick)]


def _f_values(f, space: Space, pts: np.ndarray) -> np.ndarray:
    if isinstance(f, TestFunction):
        return f.evaluate(space, pts, scaled=False)
    return np.fromiter((f(space.point(row)) for row in pts), dtype=float, count=len(pts))


def equicontinuity_probe(kernel: Kernel, f, z, radii: Sequence[float], n_max: int, m: int,
                         seed: int, n_probes: int = 4, threads: int = 1) -> EquicontinuityReport:
    """Gaps ``|P^n f(z) - P^n f(y)|`` for probe points ``y`` at distance in
    ``[r/2, r]``, ``n = 1..n_max``, with common random numbers for z and y.

    The trend verdict is PASS when the modulus at the smallest radius is at
    most ``sqrt(r_min / r_max)`` times the modulus at the largest radius
    (plus 3 se), i.e. the sup over n shrinks with the radius.
    """
    radii = [float(r) for r in radii]
    if not radii or any(r <= 0 for r in radii):
        raise ValueError("radii must be positive")
    if any(b >= a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be strictly decreasing")
    if m < 2:
        raise ValueError("need m >= 2")
    space = kernel.space
    z_raw = space.raw(z)
    run_seed = derive_seed(seed, "equicontinuity_probe")
    ids = np.arange(m)
    zs = run_from(kernel, np.repeat(z_raw[None, :], m, axis=0), n_max, run_seed, ids, threads)
    fz = _f_values(f, space, zs.reshape(-1, space.dim)).reshape(m, n_max)
    matrix = np.zeros((len(radii), n_max))
    stderr = np.zeros((len(radii), n_max))
    probes = {}
    notes = []
    for ri, r in enumerate(radii):
        rng = np.random.default_rng(derive_seed(seed, "probe-points", ri))
        pts = _probe_points(space, z_raw, r, n_probes, rng)
        probes[repr(r)] = [str(space.point(p)) for p in pts]
        if not pts:
            notes.append(f"no probe points found at radius {r}")
            continue
        for y in pts:
            ys = run_from(kernel, np.repeat(np.asarray(y)[None, :], m, axis=0), n_max,
                          run_seed, ids, threads)
            fy = _f_values(f, space, ys.reshape(-1, space.dim)).reshape(m, n_max)
            diff = fy - fz
            gap = np.abs(diff.mean(axis=0))
            se = diff.std(axis=0, ddof=1) / math.sqrt(m)
            better = gap > matrix[ri]
            matrix[ri] = np.where(better, gap, matrix[ri])
            stderr[ri] = np.where(better, se, stderr[ri])
    modulus, mod_se = [], []
    for ri in range(len(radii)):
        n_arg = int(np.argmax(matrix[ri]))
        modulus.append(float(matrix[ri, n_arg]))
        mod_se.append(float(stderr[ri, n_arg]))
    if len(radii) < 2:
        verdict = Verdict.INCONCLUSIVE
        notes.append("a trend needs at least two radii")
    else:
        limit = modulus[0] * math.sqrt(radii[-1] / radii[0]) + 3 * (mod_se[0] + mod_se[-1])
        verdict = Verdict.PASS if modulus[-1] <= limit else Verdict.FAIL
        if verdict is Verdict.FAIL:
            notes.append("modulus does not shrink with the radius: no e-chain trend "
                         "(non-equicontinuous behavior)")
    return EquicontinuityReport(
        center=str(space.point(z)), radii=radii, horizons=list(range(1, n_max + 1)),
        matrix=matrix, stderr=stderr, modulus=modulus, modulus_stderr=mod_se,
        verdict=verdict,
        inputs={"kernel": kernel.describe(), "n_max": n_max, "m": m, "seed": seed,
                "n_probes": n_probes,
                "f": getattr(f, "label", getattr(f, "__name__", "f"))},
        notes=notes + ["common random numbers: z and every probe share stream ids"],
        probes=probes,
    )


def _medoid(space: Space, pts: np.ndarray, rng: np.random.Generator,
            n_cand: int = 256, n_ref: int = 4096) -> np.ndarray:
    cand = pts if len(pts) <= n_cand else pts[rng.choice(len(pts), n_cand, replace=False)]
    ref = pts if len(pts) <= n_ref else pts[rng.choice(len(pts), n_ref, replace=False)]
    costs = [space.distances(ref, c).sum() for c in cand]
    return cand[int(np.argmin(costs))]


def tightness_probe(kernel: Kernel, z, eps: float, n: int, m: int, seed: int,
                    quantile: Optional[float] = None, pilot_n: Optional[int] = None,
                    confidence: float = 0.95, threads: int = 1,
                    j_window: Optional[int] = None) -> DiagnosticReport:
    """Estimate ``liminf P^n(z, K^eps)`` for a candidate compact ``K``.

    ``K`` is the Cesaro cloud of a pilot ensemble (horizon ``pilot_n``,
    default ``n // 4``) trimmed to ``quantile`` (default ``1 - eps/2``) by
    distance from its medoid.  A fresh ensemble is scored on every step of
    the final quarter; PASS iff the liminf proxy is >= ``1 - eps`` within CI.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    quantile = 1.0 - eps / 2.0 if quantile is None else quantile
    pilot_n = max(1, n // 4) if pilot_n is None else pilot_n
    space = kernel.space
    pilot = ensemble(kernel, z, pilot_n, m, derive_seed(seed, "tightness_probe", "pilot"), threads)
    cloud = pilot.array.reshape(-1, space.dim)
    rng = np.random.default_rng(derive_seed(seed, "tightness_probe", "medoid"))
    medoid = _medoid(space, cloud, rng)
    d = space.distances(cloud, medoid)
    cut = float(np.quantile(d, quantile, method="inverted_cdf"))
    K = cloud[d <= cut]
    index = FiniteSetIndex(space, K)

    fresh = ensemble(kernel, z, n, m, derive_seed(seed, "tightness_probe", "fresh"), threads)
    q = final_quarter_start(n)
    steps = sorted(set(report_grid(q, 64) if q > 0 else []) | set(range(q + 1, n + 1)))
    counts = np.array([(index.query(fresh.array[:, t - 1, :]) < eps).sum() for t in steps])
    p, lo, hi = wilson_arrays(counts, m, confidence)
    tail = [i for i, t in enumerate(steps) if t > q]
    worst = tail[int(np.argmin(p[tail]))]
    verdict = verdict_at_least(float(lo[worst]), float(hi[worst]), 1.0 - eps)
    series = [SeriesPoint(t, float(p[i]), float(lo[i]), float(hi[i])) for i, t in enumerate(steps)]
    statistic = {"liminf_proxy": float(p[worst]), "ci_low": float(lo[worst]),
                 "ci_high": float(hi[worst]), "at_n": steps[worst],
                 "K_atoms": int(len(index.points)), "trim_radius": cut,
                 "medoid": str(space.point(medoid))}
    notes = ["K built from pilot data (quantile-trimmed Cesaro cloud); K^eps is the open "
             "eps-fattening"]
    if space.kind == "seq":
        esc = escape_statistics(fresh, j_window if j_window is not None else max(1, n // 10))
        statistic["escape"] = esc.statistic
        statistic["escape_window_mass"] = esc.statistic["final_mass"]
        notes.append("sequence space: Cesaro mass escapes in j, see escape statistics")
    return DiagnosticReport(
        condition_name="tightness_probe",
        inputs={"kernel": kernel.describe(), "z": str(space.point(z)), "eps": eps, "n": n,
                "m": m, "seed": seed, "quantile": quantile, "pilot_n": pilot_n,
                "confidence": confidence},
        verdict=verdict,
        threshold={"liminf_at_least": 1.0 - eps},
        statistic=statistic,
        series=series,
        notes=notes,
    )


def _geometric_checkpoints(n: int) -> list:
    pts = {0, n}
    t = 1
    while t < n:
        pts.add(t)
        t *= 2
    return sorted(pts)


def stability_probe(kernel: Kernel, mu1: EmpiricalMeasure, mu2: EmpiricalMeasure, n: int,
                    m_per_atom: int, seed: int,
                    dictionary: Optional[TestFunctionDictionary] = None,
                    checkpoints: Optional[Sequence[int]] = None, dict_size: int = 64,
                    threads: int = 1) -> DiagnosticReport:
    """``bl_distance(mu1 P^t, mu2 P^t)`` at checkpoints ``t`` (default
    geometric, including 0 and ``n``).

    Both measures are propagated with the same master seed, so atom ``a`` of
    either measure uses the same streams (a common-random-number coupling).
    PASS iff the least-squares slope of the series is negative and the final
    value is below half the initial one.
    """
    if mu1.space != mu2.space:
        raise ValueError("measures live on different spaces")
    space = kernel.space
    checkpoints = _geometric_checkpoints(n) if checkpoints is None else sorted(set(checkpoints))
    if checkpoints[0] < 0 or checkpoints[-1] > n:
        raise ValueError("checkpoints must lie in [0, n]")
    run_seed = derive_seed(seed, "stability_probe")
    s1, w1 = propagate(kernel, mu1, n, m_per_atom, run_seed, threads)
    s2, w2 = propagate(kernel, mu2, n, m_per_atom, run_seed, threads)

    def snap(states, weights, mu, t):
        if t == 0:
            return mu
        return EmpiricalMeasure(space, states[:, t - 1, :], weights, normalize=True)

    snaps = [(snap(s1, w1, mu1, t), snap(s2, w2, mu2, t)) for t in checkpoints]
    if dictionary is None:
        pool = [mu for pair in snaps for mu in pair]
        dictionary = build_dictionary(pool, size=dict_size,
                                      seed=derive_seed(seed, "stability_probe", "dictionary"))
    floor = 3.0 * mc_error_bound(len(s1), len(s2), len(dictionary))
    vals = np.array([bl_distance(a, b, dictionary) for a, b in snaps])
    series = [SeriesPoint(t, float(v), max(0.0, float(v) - floor), float(v) + floor)
              for t, v in zip(checkpoints, vals)]
    slope = float(np.polyfit(checkpoints, vals, 1)[0]) if len(vals) > 1 else 0.0
    ok = slope < 0 and vals[-1] < vals[0] / 2
    extra, notes = {}, ["common random numbers couple the two propagated measures"]
    if space.kind == "seq":
        marg = Space("real", 1)

        def jm(mu):
            return EmpiricalMeasure(marg, mu.points[:, 1:2].astype(float), mu.weights)

        jsnaps = [(jm(a), jm(b)) for a, b in snaps]
        jdict = build_dictionary([mu for pair in jsnaps for mu in pair], size=dict_size,
                                 seed=derive_seed(seed, "stability_probe", "j-dictionary"))
        jvals = [bl_distance(a, b, jdict) for a, b in jsnaps]
        extra["j_marginal"] = [SeriesPoint(t, float(v), max(0.0, float(v) - floor), float(v) + floor)
                               for t, v in zip(checkpoints, jvals)]
        notes.append("j-marginal series reported separately; the dictionary decides which "
                     "differences are visible")
        if not ok:
            notes.append("weak convergence is not expected for this chain (it has no "
                         "invariant measure)")
    return DiagnosticReport(
        condition_name="stability_probe",
        inputs={"kernel": kernel.describe(), "n": n, "m_per_atom": m_per_atom, "seed": seed,
                "atoms": [len(mu1), len(mu2)], "checkpoints": list(checkpoints),
                "dictionary": dictionary.provenance},
        verdict=Verdict.PASS if ok else Verdict.FAIL,
        threshold={"slope_lt": 0.0, "final_lt_initial_over": 2.0},
        statistic={"initial": float(vals[0]), "final": float(vals[-1]), "slope": slope,
                   "noise_floor": floor},
        series=series,
        extra_series=extra,
        notes=notes,
    )


def mixing_bound_k(alpha: float, f_norm: float, eps: float) -> int:
    """Least integer ``k >= 0`` with ``4 (1 - alpha/2)^k ||f|| <= eps``."""
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    if not f_norm > 0:
        raise ValueError("f_norm must be positive")
    if not eps > 0:
        raise ValueError("eps must be positive")
    if eps >= 4.0 * f_norm:
        return 0
    base = 1.0 - alpha / 2.0
    k = max(0, math.ceil(math.log(eps / (4.0 * f_norm)) / math.log(base)))
    while 4.0 * base ** k * f_norm > eps:
        k += 1
    while k > 0 and 4.0 * base ** (k - 1) * f_norm <= eps:
        k -= 1
    return k


def support_estimate(mu: EmpiricalMeasure, eps: float, chunk: int = 8192) -> list:
    """Greedy eps-net of the positive-weight atoms, in atom order.

    Every atom ends up within ``eps`` of a representative and representatives
    are pairwise at least ``eps`` apart.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    space = mu.space
    pts = mu.points[mu.weights > 0]
    _, first = np.unique(pts, axis=0, return_index=True)
    pts = pts[np.sort(first)]
    reps: list = []
    for start in range(0, len(pts), chunk):
        block = pts[start:start + chunk]
        if reps:
            rep_arr = np.stack(reps)
            dmin = np.min(np.stack([space.distances(block, r) for r in rep_arr]), axis=0)
            block = block[dmin >= eps]
        for row in block:
            if not reps or np.min(space.distances(np.stack(reps), row)) >= eps:
                reps.append(row)
    return [space.point(r) for r in reps]
