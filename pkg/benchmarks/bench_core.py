"""Time the compiled core against the pure-Python loops.

Both backends consume identical random streams, so the benchmark also checks
that their outputs agree bit for bit.

    python3 benchmarks/bench_core.py --steps 2000 --paths 200
"""

import argparse
import time

import numpy as np

from ergochain import _backend
from ergochain.counterexample import CExampleChain, Mode, SeqState
from ergochain.ifs import decay2d, dyadic
from ergochain.kernel import ensemble

CASES = {
    "DYADIC": lambda b: (dyadic(backend=b), [0.0]),
    "DECAY2D": lambda b: (decay2d(backend=b), [1.0, -1.0]),
    "COUNTEREXAMPLE": lambda b: (CExampleChain(Mode.PATCHED, backend=b), SeqState(1, 1, 1)),
}


def best_of(repeats, fn):
    times, out = [], None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=2000, help="horizon per path")
    ap.add_argument("--paths", type=int, default=200, help="ensemble size")
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args(argv)

    if "compiled" not in _backend.available():
        print("compiled core not built; only the Python backend is available")
    backends = _backend.available()
    steps = args.steps * args.paths
    print(f"{'kernel':<16}{'backend':<10}{'seconds':>10}{'Msteps/s':>11}{'speedup':>9}")
    for name, make in CASES.items():
        results = {}
        for b in backends:
            kernel, x0 = make(b)
            sec, ens = best_of(args.repeats, lambda: ensemble(
                kernel, x0, args.steps, args.paths, args.seed, args.threads))
            results[b] = (sec, ens.array)
        base = results["python"][0]
        for b, (sec, _) in results.items():
            print(f"{name:<16}{b:<10}{sec:>10.3f}{steps / sec / 1e6:>11.2f}{base / sec:>8.1f}x")
        if len(results) == 2:
            same = np.array_equal(results["compiled"][1], results["python"][1])
            print(f"{'':<16}outputs identical: {same}")


if __name__ == "__main__":
    main()
