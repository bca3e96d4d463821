from __future__ import annotations

import csv
import json

import pytest

from critlab import cli

GAP = """
command: gap-scan
model: {family: rabi, omega: 1.0, gap_atom: 1.0, lambda: critical}
grids: {omega: [0.2, 0.1, 0.05, 0.025, 0.0125]}
"""


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return path


def run_cli(tmp_path, command, text, *extra):
    cfg = write(tmp_path, "run.yaml", text)
    out_csv, out_json = tmp_path / "out.csv", tmp_path / "out.json"
    code = cli.main([command, "--config", str(cfg), "--out-csv", str(out_csv),
                     "--out-json", str(out_json), *extra])
    return code, out_csv, out_json


def test_gap_scan_end_to_end(tmp_path):
    code, out_csv, out_json = run_cli(tmp_path, "gap-scan", GAP)
    assert code == 0
    rows = list(csv.reader(out_csv.open()))
    assert rows[0] == ["axis_value", "gap", "n_fock", "converged"]
    assert [float(r[0]) for r in rows[1:]] == [0.2, 0.1, 0.05, 0.025, 0.0125]
    summary = json.loads(out_json.read_text())
    fit = summary["fits"][0]
    assert fit["fit"]["slope"] == pytest.approx(4 / 3, abs=0.05)
    assert fit["pass"] is True and summary["pass"] is True
    assert summary["config"]["tolerances"]["convergence_tol"] == 1e-6
    assert len(summary["points"]) == 5
    assert summary["wall_clock_seconds"] >= 0


def test_matsubara_check_end_to_end(tmp_path):
    text = "model: {gap_atom: 1.0}\nmatsubara: {beta: 5, cutoff: 1000000}\n"
    code, out_csv, out_json = run_cli(tmp_path, "matsubara-check", text)
    assert code == 0
    assert out_csv.read_text().splitlines()[0] == "p,closed,sum,rel_err"
    fit = json.loads(out_json.read_text())["fits"][0]
    assert fit["max_rel_deviation"] < 1e-5 and fit["pass"] is True


def test_csv_bodies_are_deterministic(tmp_path):
    text = "mc: {beta: 4, n_sites: 16, n_therm: 200, n_sweeps: 2000, bin_size: 100}\n"
    bodies = []
    for _ in range(2):
        code, out_csv, _ = run_cli(tmp_path, "eft-mc", text, "--seed", "4")
        assert code == 0
        bodies.append(out_csv.read_bytes())
    assert bodies[0] == bodies[1]
    code, out_csv, _ = run_cli(tmp_path, "eft-mc", text, "--seed", "5")
    assert out_csv.read_bytes() != bodies[0]


def test_spectrum_rows(tmp_path):
    text = "model: {omega: 0.5, lambda: 0.5}\nspectrum: {n_levels: 4}\n"
    code, out_csv, _ = run_cli(tmp_path, "spectrum", text)
    rows = list(csv.reader(out_csv.open()))
    assert code == 0 and rows[0] == ["index", "energy", "parity"] and len(rows) == 5
    for r in rows[1:]:
        assert abs(abs(float(r[2])) - 1) < 1e-8


def test_corr_sweep_schema_and_order(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.WORKERS_ENV, "2")
    text = "model: {lambda: 1.2}\ngrids: {omega: [0.2, 0.1, 0.05, 0.025], z_prime: [1.0]}\n"
    code, out_csv, out_json = run_cli(tmp_path, "corr-sweep", text)
    rows = list(csv.reader(out_csv.open()))
    assert code == 0
    assert rows[0] == ["z_prime", "omega", "beta", "n_fock", "c_half", "converged"]
    assert [float(r[1]) for r in rows[1:]] == [0.2, 0.1, 0.05, 0.025]


def test_non_convergence_exit_code_keeps_rows(tmp_path):
    code, out_csv, out_json = run_cli(tmp_path, "gap-scan", GAP, "--set", "truncation.max_fock=32")
    assert code == 2
    rows = list(csv.reader(out_csv.open()))
    assert len(rows) == 6
    assert "false" in [r[3] for r in rows[1:]]
    assert json.loads(out_json.read_text())["all_converged"] is False


def test_config_errors_exit_one(tmp_path, capsys):
    code, *_ = run_cli(tmp_path, "gap-scan", GAP.replace("omega: 1.0", "omega: -2"))
    assert code == 1
    assert "omega" in capsys.readouterr().err
    code, *_ = run_cli(tmp_path, "gap-scan", "model: {omega: [1\n")
    assert code == 1
    assert cli.main(["gap-scan", "--config", str(tmp_path / "missing.yaml")]) == 1


def test_bad_worker_env_is_config_error(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.WORKERS_ENV, "zero")
    code, *_ = run_cli(tmp_path, "gap-scan", GAP)
    assert code == 1


def test_io_error_exit_three(tmp_path):
    cfg = write(tmp_path, "run.yaml", GAP)
    code = cli.main(["gap-scan", "--config", str(cfg), "--out-csv",
                     str(tmp_path / "no" / "such" / "dir.csv")])
    assert code == 3


def test_fmt_is_locale_free():
    assert cli.fmt(0.1) == "0.1"
    assert cli.fmt(True) == "true"
    assert cli.fmt(3) == "3"


def test_unbounded_model_action_is_config_error(tmp_path):
    text = "model: {lambda: 1.0, omega: 0.1}\nmc: {source: model, n_sweeps: 2000, bin_size: 100}\n"
    code, *_ = run_cli(tmp_path, "eft-mc", text)
    assert code == 1
