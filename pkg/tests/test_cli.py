import copy
import csv
import json

import numpy as np
import pytest

from msstab import reproduce as reproduce_mod
from msstab.cli import EXIT_INVALID, EXIT_IO, EXIT_MISMATCH, EXIT_OK, main

BASE = {
    "equation": {"nu": 1.0, "operator": "G1"},
    "noise": {"C_mu": 1.0, "alpha": 3.0},
    "space": {"basis": "spectral", "N_h": 15},
    "time": {"dt": 0.04, "T": 1.0},
    "scheme": {"rational": "BE", "integrator": "EM"},
    "mc": {"M": 500},
}


def write_cfg(tmp_path, **changes):
    raw = copy.deepcopy(BASE)
    for key, val in changes.items():
        sec, field = key.split("__")
        raw[sec][field] = val
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(raw))
    return path


def test_analyze_baseline(tmp_path, capsys):
    assert main(["analyze", "--config", str(write_cfg(tmp_path))]) == EXIT_OK
    rep = json.loads(capsys.readouterr().out)
    assert rep["classification"] == "Stable"
    assert rep["rho"] == pytest.approx((1 + 0.04) / (1 + 0.04 * np.pi ** 2) ** 2, rel=1e-12)
    assert rep["analytic_solution_classification"] == "Stable"
    assert rep["dominant_mode"] == [1, 1]


def test_analyze_forward_euler_unstable(tmp_path):
    cfg = write_cfg(tmp_path, scheme__rational="FE", time__dt=0.001)
    out = tmp_path / "rep.json"
    assert main(["analyze", "--config", str(cfg), "--json", str(out)]) == EXIT_OK
    rep = json.loads(out.read_text())
    assert rep["classification"] == "Unstable"
    assert rep["conditions"]["table1_max_lambda"] > 1


def test_analyze_zero_noise(tmp_path, capsys):
    cfg = write_cfg(tmp_path, equation__operator="zero", scheme__rational="CN")
    assert main(["analyze", "--config", str(cfg)]) == EXIT_OK
    rep = json.loads(capsys.readouterr().out)
    z = 0.04 * np.pi ** 2 * np.arange(1, 16) ** 2
    r = (1 - z / 2) / (1 + z / 2)
    assert rep["rho"] == pytest.approx(np.max(r ** 2), rel=1e-10)


def test_simulate_csv_and_svg(tmp_path, capsys):
    cfg = write_cfg(tmp_path, time__T=0.4)
    csv_path, svg_path = tmp_path / "ms.csv", tmp_path / "ms.svg"
    assert main(["simulate", "--config", str(cfg), "--csv", str(csv_path),
                 "--svg", str(svg_path)]) == EXIT_OK
    rows = list(csv.DictReader(csv_path.open()))
    assert len(rows) == 11 and float(rows[0]["t"]) == 0.0
    assert svg_path.read_text().lstrip().startswith("<?xml")
    assert "trend=decaying" in capsys.readouterr().err


def test_simulate_stdout_and_output_dir(tmp_path, capsys):
    cfg = write_cfg(tmp_path, time__T=0.08)
    raw = json.loads(cfg.read_text())
    raw["output"] = {"dir": "results"}
    cfg.write_text(json.dumps(raw))
    assert main(["simulate", "--config", str(cfg)]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "t,ms_estimate,ms_stderr,reference" and len(lines) == 4
    assert main(["simulate", "--config", str(cfg), "--csv", "out.csv"]) == EXIT_OK
    assert (tmp_path / "results" / "out.csv").exists()


def test_exit_code_invalid_config(tmp_path, capsys):
    cfg = write_cfg(tmp_path, noise__alpha=0.5)
    assert main(["analyze", "--config", str(cfg)]) == EXIT_INVALID
    assert "noise.alpha" in capsys.readouterr().err
    assert main(["analyze", "--config", str(tmp_path / "missing.json")]) == EXIT_INVALID


def test_exit_code_budget(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    assert main(["simulate", "--config", str(cfg), "--budget", "100"]) == EXIT_INVALID
    assert "estimated cost 12500" in capsys.readouterr().err


def test_exit_code_io_error(tmp_path):
    cfg = write_cfg(tmp_path)
    target = tmp_path / "no" / "such" / "dir" / "rep.json"
    assert main(["analyze", "--config", str(cfg), "--json", str(target)]) == EXIT_IO


def test_reproduce_table3(tmp_path, capsys):
    assert main(["reproduce", "table3", "--out", str(tmp_path)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "15 passed, 0 failed" in out
    assert (tmp_path / "table3.csv").exists()


def test_reproduce_mismatch_exit_code(monkeypatch, capsys):
    real = reproduce_mod.load_expected

    def tampered(target):
        data = real(target)
        data["values"][0]["BE"] *= 1.01
        return data

    monkeypatch.setattr(reproduce_mod, "load_expected", tampered)
    assert main(["reproduce", "table3"]) == EXIT_MISMATCH
    assert "MISMATCH" in capsys.readouterr().out


def test_reproduce_figure_without_simulation(tmp_path, capsys):
    assert main(["reproduce", "fig1b", "--no-simulate", "--out", str(tmp_path)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "DISCREPANCY" in out and "1.29428" in out


def test_unknown_target():
    with pytest.raises(SystemExit):
        main(["reproduce", "fig9"])
