import csv
import json
import subprocess
import sys
import xml.etree.ElementTree as ET

import numpy as np
import pytest

import gkreg.hybrid
from gkreg import cli
from gkreg.cli import CSV_HEADER, ConfigError, ExperimentConfig, _parse_seeds, main
from gkreg.plotting import error_curve_svg, pgm_bytes

SUMMARY_KEYS = {
    "config", "best_k", "min_relative_error", "final_k", "final_relative_error", "semi_convergence",
    "noise_norm", "tau", "discrepancy_k", "discrepancy_crossed", "stop_reason", "breakdown_at",
    "reorthogonalize", "inner_iterations", "inner_stop_reasons", "total_elapsed_ms", "kernels",
}


def _run(tmp_path, name, *extra):
    out = tmp_path / name
    code = main(["run", "--problem", "gravity", "--n", "120", "--kmax", "12", "--seed", "2",
                 "--out", str(out), *extra])
    assert code == 0
    return out


def test_run_writes_files_and_is_deterministic(tmp_path):
    a = _run(tmp_path, "a")
    b = _run(tmp_path, "b")
    for f in ("results.csv", "curve.svg"):
        assert (a / f).read_bytes() == (b / f).read_bytes()
    assert {p.name for p in a.iterdir()} == {"results.csv", "summary.json", "curve.svg"}


def test_csv_schema(tmp_path):
    out = _run(tmp_path, "a")
    rows = list(csv.reader((out / "results.csv").open()))
    assert rows[0] == CSV_HEADER
    ks = [int(r[0]) for r in rows[1:]]
    assert ks == list(range(1, 13))
    for r in rows[1:]:
        for cell in (r[1], r[2]):
            assert f"{float(cell):.17g}" == cell
        assert int(r[3]) >= 0
        assert float(r[4]) == 0.0    # wall clock only with --timing


def test_timing_flag(tmp_path):
    out = _run(tmp_path, "t", "--timing")
    ms = [float(r[4]) for r in list(csv.reader((out / "results.csv").open()))[1:]]
    assert ms[-1] > 0 and all(b >= a for a, b in zip(ms, ms[1:]))


def test_summary_contents(tmp_path):
    out = _run(tmp_path, "a")
    s = json.loads((out / "summary.json").read_text())
    assert set(s) == SUMMARY_KEYS
    assert s["config"]["problem"] == "gravity" and s["config"]["L"] == "d1"
    assert s["reorthogonalize"] is True and s["discrepancy_crossed"] in (True, False)
    assert len(s["inner_iterations"]) == s["final_k"] == 12


def test_svg_deterministic_and_well_formed():
    ks = list(range(1, 11))
    errs = [1.0 / k + 0.01 * k * k for k in ks]
    a, b = error_curve_svg(ks, errs), error_curve_svg(ks, errs)
    assert a == b
    root = ET.fromstring(a)
    assert root.tag.endswith("svg")
    assert len([e for e in root.iter() if e.tag.endswith("circle")]) == 1


def test_pgm():
    data = pgm_bytes(np.array([[0.0, 1.0], [0.5, 1.0]]))
    assert data == b"P2\n2 2\n255\n0 255\n128 255\n"


def test_noise_free_deriv2_converges(tmp_path):
    out = tmp_path / "d2"
    assert main(["run", "--problem", "deriv2", "--n", "40", "--noise", "0", "--kmax", "40",
                 "--out", str(out)]) == 0
    s = json.loads((out / "summary.json").read_text())
    assert s["final_k"] == 40 and s["final_relative_error"] <= 1e-6
    assert s["discrepancy_k"] is None


def test_shaw_seed7_interval(tmp_path):
    out = tmp_path / "shaw"
    assert main(["run", "--problem", "shaw", "--n", "1000", "--noise", "1e-2", "--L", "d1",
                 "--kmax", "30", "--seed", "7", "--out", str(out)]) == 0
    s = json.loads((out / "summary.json").read_text())
    assert 0.08 <= s["min_relative_error"] <= 0.30


def test_blur_run_writes_images(tmp_path):
    out = tmp_path / "blur"
    assert main(["run", "--problem", "blur", "--n", "12", "--kmax", "10", "--out", str(out)]) == 0
    assert (out / "x_true.pgm").read_bytes().startswith(b"P2\n12 12\n")
    assert (out / "x_best.pgm").exists()
    assert json.loads((out / "summary.json").read_text())["config"]["L"] == "d2d-kron"


def test_unwritable_output_fails_before_work(tmp_path, monkeypatch, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    called = []
    monkeypatch.setattr(cli, "execute", lambda cfg: called.append(cfg))
    assert main(["run", "--problem", "heat", "--n", "16", "--kmax", "3", "--out", str(blocker / "sub")]) == 2
    assert called == []
    assert "not writable" in capsys.readouterr().err


def test_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"problem": "heat", "n": 32, "kmax": 5, "noise": 0.05}))
    out = tmp_path / "o"
    assert main(["run", "--config", str(cfg), "--kmax", "4", "--out", str(out)]) == 0
    s = json.loads((out / "summary.json").read_text())
    assert s["config"]["kmax"] == 4 and s["config"]["noise"] == 0.05 and s["final_k"] == 4


def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_mapping({"problem": "heat", "colour": "red"})
    with pytest.raises(ConfigError):
        ExperimentConfig(problem="heat", n=16, kmax=17)
    with pytest.raises(ConfigError):
        ExperimentConfig(problem="heat", tol=0)
    with pytest.raises(ConfigError):
        ExperimentConfig(problem="heat", noise=-1)
    assert ExperimentConfig(problem="blur", n=8, kmax=64).L == "d2d-kron"


def test_validate_all(capsys):
    assert main(["validate"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 7 and all(line.startswith("[PASS]") for line in lines)


def test_validate_filter(capsys):
    assert main(["validate", "--filter", "thm32"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 1 and "thm32" in lines[0]


def test_validate_detects_skipped_deflation(monkeypatch, capsys):
    # injected fault: the inner problem uses L instead of L (I - Q Q^T)
    monkeypatch.setattr(gkreg.hybrid, "deflated_operator", lambda L, state, k: L)
    assert main(["validate", "--filter", "thm31"]) == 1
    assert "[FAIL] thm31" in capsys.readouterr().out


def test_sweep_needs_two_seeds(tmp_path, capsys):
    assert main(["sweep", "--problem", "heat", "--n", "16", "--kmax", "3", "--seeds", "4",
                 "--out", str(tmp_path / "s")]) == 2
    assert "at least 2 seeds" in capsys.readouterr().err


def test_sweep_outputs(tmp_path, monkeypatch):
    out = tmp_path / "s"
    monkeypatch.setenv("GKREG_THREADS", "1")
    assert main(["sweep", "--problem", "gravity", "--n", "64", "--kmax", "10", "--seeds", "0-3",
                 "--out", str(out)]) == 0
    s = json.loads((out / "sweep_summary.json").read_text())
    errs = [r["min_relative_error"] for r in s["per_seed"]]
    assert s["seeds"] == [0, 1, 2, 3]
    assert s["median_min_relative_error"] == pytest.approx(float(np.median(errs)))
    assert s["iqr"] == pytest.approx(s["q3"] - s["q1"])
    rows = list(csv.reader((out / "sweep.csv").open()))
    assert rows[0][:3] == ["seed", "min_relative_error", "best_k"] and len(rows) == 5


def test_sweep_parallel_matches_serial(tmp_path, monkeypatch):
    args = ["sweep", "--problem", "heat", "--n", "48", "--kmax", "8", "--seeds", "1,4"]
    monkeypatch.setenv("GKREG_THREADS", "1")
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    monkeypatch.setenv("GKREG_THREADS", "2")
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a/sweep.csv").read_bytes() == (tmp_path / "b/sweep.csv").read_bytes()


def test_parse_seeds():
    assert _parse_seeds("0-3") == [0, 1, 2, 3]
    assert _parse_seeds("1,4,7") == [1, 4, 7]
    assert _parse_seeds("0-1,5") == [0, 1, 5]


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "gkreg", "validate", "--filter", "factor"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "[PASS] factor" in res.stdout
