import os
import subprocess
import sys

import numpy as np
import pytest

from ergochain import _backend
from ergochain.counterexample import CExampleChain, InvalidCellError, Mode
from ergochain.ifs import AffineIfs, ProbabilityVectorError, decay2d, dyadic
from ergochain.kernel import ensemble, run_from
from ergochain.points import SeqState

needs_core = pytest.mark.skipif("compiled" not in _backend.available(),
                                reason="compiled core not built")


@needs_core
@pytest.mark.parametrize("make, x0", [(dyadic, [0.0]), (decay2d, [3.0, -2.0])])
def test_affine_bit_identical(make, x0):
    a = ensemble(make("compiled"), x0, 300, 64, 17).array
    b = ensemble(make("python"), x0, 300, 64, 17).array
    assert np.array_equal(a, b)


@needs_core
def test_affine_error_location_matches():
    def bad(backend):
        return AffineIfs("BAD", [[[0.9]], [[0.9]]], [[0.0], [0.1]], [0.5, 0.5],
                         p_slope=[[0.6], [-0.6]], p_clip=2.0, gamma=1.0, r=0.9,
                         backend=backend)
    starts = np.array([[0.0], [0.5], [1.5]])
    errs = []
    for backend in ("compiled", "python"):
        with pytest.raises(ProbabilityVectorError) as info:
            run_from(bad(backend), starts, 50, 2, np.arange(3))
        errs.append(tuple(info.value.xi))
    assert errs[0] == errs[1]


@needs_core
@pytest.mark.parametrize("offset", [1, 2])
def test_counterexample_bit_identical(offset):
    a = ensemble(CExampleChain(p2_offset=offset, backend="compiled"), SeqState(1, 1, 1), 800,
                 64, 5).array
    b = ensemble(CExampleChain(p2_offset=offset, backend="python"), SeqState(1, 1, 1), 800,
                 64, 5).array
    assert np.array_equal(a, b)


@needs_core
def test_literal_error_matches():
    cells = []
    for backend in ("compiled", "python"):
        with pytest.raises(InvalidCellError) as info:
            ensemble(CExampleChain(Mode.LITERAL, backend=backend), SeqState(3, 1, 1), 500, 20, 1)
        cells.append(info.value.state)
    assert cells[0] == cells[1]


def test_pure_python_can_be_forced():
    env = dict(os.environ, ERGOCHAIN_PURE="1")
    out = subprocess.run([sys.executable, "-c", "import ergochain; print(ergochain.backend())"],
                         capture_output=True, text=True, env=env, check=True)
    assert out.stdout.strip() == "python"


def test_unknown_backend_rejected():
    with pytest.raises(ValueError):
        ensemble(dyadic("fortran"), [0.0], 3, 2, 0)


def test_benchmark_script_runs(capsys):
    import importlib.util
    from pathlib import Path

    path = Path(__file__).resolve().parents[1] / "benchmarks" / "bench_core.py"
    spec = importlib.util.spec_from_file_location("bench_core", path)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    mod.main(["--steps", "20", "--paths", "5", "--repeats", "1"])
    out = capsys.readouterr().out
    assert "DYADIC" in out and "COUNTEREXAMPLE" in out
    assert "outputs identical: False" not in out
