import json
import subprocess
import sys
from pathlib import Path

import pytest

from ergochain.cli import DIAGNOSTICS, list_builtins, main

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"
GOLDEN = Path(__file__).resolve().parent / "golden"

NINE = ["estimate_condition_E", "estimate_liminf_return", "drift_check", "equicontinuity_probe",
        "tightness_probe", "stability_probe", "mixing_bound_k", "support_estimate",
        "invariance_residual"]


def write(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_list_builtins(capsys):
    assert main(["list"]) == 0
    out = capsys.readouterr().out
    for name in ["DYADIC", "DECAY2D", "POINT", "COUNTEREXAMPLE"] + NINE:
        assert name in out
    assert out == list_builtins()
    assert set(NINE) <= set(DIAGNOSTICS)


def test_dyadic_condition_E_config(tmp_path):
    out = tmp_path / "o"
    assert main(["run", str(CONFIGS / "dyadic_condition_E.toml"), "--output", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["schema"] == "ergochain-report/1" and rep["verdict"] == "PASS"
    assert (out / "series.csv").read_text().splitlines()[0] == "n,estimate,ci_low,ci_high"
    man = json.loads((out / "manifest.json").read_text())
    assert man["seed"] == 42 and man["version"] == "0.1.0"


def test_counterexample_tightness_exits_1(tmp_path):
    assert main(["run", str(CONFIGS / "counterexample_tightness.toml"),
                 "--output", str(tmp_path)]) == 1


def test_golden_report(tmp_path):
    assert main(["run", str(GOLDEN / "dyadic_small.toml"), "--output", str(tmp_path)]) == 0
    assert (tmp_path / "report.json").read_bytes() == \
        (GOLDEN / "dyadic_small.report.json").read_bytes()
    assert (tmp_path / "series.csv").read_bytes() == \
        (GOLDEN / "dyadic_small.series.csv").read_bytes()


def test_rerun_and_manifest_replay_identical(tmp_path):
    cfg = str(CONFIGS / "counterexample_u0.toml")
    main(["run", cfg, "--output", str(tmp_path / "a")])
    main(["run", cfg, "--output", str(tmp_path / "b")])
    main(["run", str(tmp_path / "a" / "manifest.json"), "--output", str(tmp_path / "c")])
    for f in ("report.json", "series.csv", "manifest.json"):
        ref = (tmp_path / "a" / f).read_bytes()
        assert (tmp_path / "b" / f).read_bytes() == ref
        assert (tmp_path / "c" / f).read_bytes() == ref


def test_seed_override_changes_output(tmp_path):
    cfg = str(GOLDEN / "dyadic_small.toml")
    main(["run", cfg, "--output", str(tmp_path / "a")])
    main(["run", cfg, "--output", str(tmp_path / "b"), "--seed", "7"])
    assert (tmp_path / "a" / "report.json").read_bytes() != \
        (tmp_path / "b" / "report.json").read_bytes()
    assert json.loads((tmp_path / "b" / "manifest.json").read_text())["seed"] == 7


def test_syntax_error_exit_64(tmp_path, capsys):
    assert main(["run", write(tmp_path, "seed = 1\n[kernel\n")]) == 64
    assert "line 2" in capsys.readouterr().err


@pytest.mark.parametrize("text, field", [
    ('[kernel]\nbuiltin = "DYADIC"\n[diagnostic]\nname = "mixing_bound_k"\n', "seed"),
    ('seed = 1\n[kernel]\nbuiltin = "NOPE"\n[diagnostic]\nname = "mixing_bound_k"\n',
     "kernel.builtin"),
    ('seed = 1\n[kernel]\nbuiltin = "DYADIC"\n[diagnostic]\nname = "nope"\n', "diagnostic.name"),
    ('seed = 1\n[kernel]\nbuiltin = "DYADIC"\n[diagnostic]\nname = "estimate_condition_E"\n'
     '[diagnostic.params]\nx = [0.0]\nz = [0.5]\nn = 10\nm = 2\n', "delta"),
    ('seed = 1\nwall_clock = true\n[kernel]\nbuiltin = "DYADIC"\n[diagnostic]\nname = "x"\n',
     "unknown field"),
])
def test_field_errors_exit_64(tmp_path, capsys, text, field):
    assert main(["run", write(tmp_path, text), "--output", str(tmp_path / "o")]) == 64
    assert field in capsys.readouterr().err


def test_invariant_violations_exit_65(tmp_path):
    wrong_dim = (CONFIGS / "dyadic_condition_E.toml").read_text().replace(
        "x = [0.0]", "x = [0.0, 1.0]")
    assert main(["run", write(tmp_path, wrong_dim), "--output", str(tmp_path / "o")]) == 65
    assert main(["run", str(CONFIGS / "counterexample_u0.toml"), "--mode", "literal",
                 "--output", str(tmp_path / "o")]) == 65


def test_mode_flag_only_for_counterexample(tmp_path):
    assert main(["run", str(CONFIGS / "dyadic_condition_E.toml"), "--mode", "patched",
                 "--output", str(tmp_path)]) == 64


def small_config(name, params, kernel='builtin = "DYADIC"'):
    lines = ["seed = 3", "[kernel]", kernel, "[diagnostic]", f'name = "{name}"',
             "[diagnostic.params]"] + params
    return "\n".join(lines) + "\n"


@pytest.mark.parametrize("name, params, kernel, code", [
    ("estimate_liminf_return", ["xs = [[0.0], [1.0]]", "z = [0.5]", "delta = 0.1", "n = 100",
                                "m = 2000"], 'builtin = "DYADIC"', 0),
    ("mixing_bound_k", ["alpha = 0.5", "f_norm = 1.0", "eps = 0.1"], 'builtin = "DYADIC"', 0),
    ("support_estimate", ["x = [0.0]", "n = 200", "m = 10", "eps = 0.05"], 'builtin = "DYADIC"', 0),
    ("invariance_residual", ["x = [0.0]", "n = 500", "m = 20"], 'builtin = "DYADIC"', 0),
    ("validate_params", [], 'builtin = "DECAY2D"', 0),
    ("escape_statistics", ["start = [1, 1, 1]", "n = 300", "m = 20"],
     'builtin = "COUNTEREXAMPLE"', 0),
    ("z_return_probe", ["start = [1, 1, 1]", "radius = 0.6", "n = 200", "m = 200"],
     'builtin = "COUNTEREXAMPLE"', 0),
    ("tightness_probe", ["z = [0.0]", "eps = 0.1", "n = 200", "m = 100"],
     'builtin = "DYADIC"', 0),
])
def test_each_diagnostic_runs(tmp_path, name, params, kernel, code):
    path = write(tmp_path, small_config(name, params, kernel))
    assert main(["run", path, "--output", str(tmp_path / "o")]) == code
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert rep["condition_name"] == name


def test_thread_count_does_not_change_bytes(tmp_path):
    cfg = str(CONFIGS / "affine_equicontinuity.toml")
    outs = []
    for t in (1, 4, 8):
        main(["run", cfg, "--threads", str(t), "--output", str(tmp_path / str(t))])
        outs.append((tmp_path / str(t) / "report.json").read_bytes())
    assert outs[0] == outs[1] == outs[2]


def test_console_script_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "ergochain.cli", "list"], capture_output=True,
                         text=True, cwd=tmp_path, check=True)
    assert "COUNTEREXAMPLE" in out.stdout


def test_invariance_dictionary_size_is_echoed(tmp_path):
    path = write(tmp_path, small_config("invariance_residual",
                                        ["x = [0.0]", "n = 200", "m = 10", "dict_size = 16"]))
    main(["run", path, "--output", str(tmp_path / "o")])
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert rep["inputs"]["dictionary"]["size"] == 16
