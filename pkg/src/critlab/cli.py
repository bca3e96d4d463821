"""``criticality-lab`` command-line driver.

Every command writes a CSV (header first, rows appended and flushed in input
order) and then a JSON summary holding the effective configuration, fits,
pass flags, per-point convergence and wall-clock time.

Exit codes: 0 success, 1 configuration error, 2 non-convergence, 3 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator

import numpy as np

from . import efield, scaling, spectra, thermal
from . import operators as ops
from .config import ConfigError, RunConfig, parse_config, scan_plan

log = logging.getLogger("critlab")

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGED, EXIT_IO = 0, 1, 2, 3
WORKERS_ENV = "CRITLAB_WORKERS"

CSV_COLUMNS = {
    "gap-scan": ["axis_value", "gap", "n_fock", "converged"],
    "corr-sweep": ["z_prime", "omega", "beta", "n_fock", "c_half", "converged"],
    "table1": ["lambda", "z_prime", "measured_delta_or_nsi", "predicted", "abs_error"],
    "eft-mc": ["tau", "c_mean", "c_stderr"],
    "matsubara-check": ["p", "closed", "sum", "rel_err"],
    "spectrum": ["index", "energy", "parity"],
}


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV)
    if raw is None:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV}: expected a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"{WORKERS_ENV}: expected a positive integer, got {raw!r}")
    return n


def ordered_map(fn: Callable, tasks: list, workers: int) -> Iterator:
    """Yield ``fn(task)`` in task order, computing on a pool when ``workers > 1``."""
    if workers <= 1 or len(tasks) <= 1:
        for t in tasks:
            yield fn(t)
        return
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        yield from pool.map(fn, tasks)


def fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


class CsvSink:
    """Header-first CSV whose rows are flushed as they arrive."""

    def __init__(self, path: Path, columns: list[str]):
        self._fh = open(path, "w", newline="", encoding="utf-8")
        self._writer = csv.writer(self._fh, lineterminator="\n")
        self._writer.writerow(columns)
        self._fh.flush()

    def write(self, row: Iterable) -> None:
        self._writer.writerow([fmt(v) for v in row])
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


@dataclass
class RunSummary:
    command: str
    config: dict
    seed: int | None = None
    fits: list = field(default_factory=list)
    points: list = field(default_factory=list)
    results: dict = field(default_factory=dict)
    all_converged: bool = True
    wall_clock_seconds: float = 0.0
    exit_code: int = EXIT_OK

    @property
    def passed(self) -> bool:
        flags = [f["pass"] for f in self.fits if f.get("pass") is not None]
        return all(flags)

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "fits": self.fits,
            "points": self.points,
            "results": self.results,
            "all_converged": self.all_converged,
            "pass": self.passed,
            "exit_code": self.exit_code,
            "wall_clock_seconds": self.wall_clock_seconds,
            "finished_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def _slope_entry(name: str, fit: scaling.ScalingFit | None, target, tol) -> dict:
    entry = {"name": name, "fit": fit.as_dict() if fit else None, "target": target,
             "tolerance": tol, "pass": None}
    if fit is not None and target is not None:
        entry["pass"] = bool(abs(fit.slope - target) <= tol)
    return entry


# ---------------------------------------------------------------- commands

def _truncation_n0(cfg: RunConfig) -> int:
    return cfg.truncation.n0 or spectra.DEFAULT_N0[cfg.model.family]


def _cmd_spectrum(cfg: RunConfig, sink: CsvSink, summary: RunSummary, workers: int) -> None:
    spec = cfg.hamiltonian_spec()
    n_levels = cfg.spectrum.n_levels
    try:
        _, report = spectra.converge_truncation(
            lambda n: ops.build_hamiltonian(spec, n),
            lambda d: float(np.sum(d.energies[:n_levels])),
            tol=cfg.tolerances.convergence_tol, n0=_truncation_n0(cfg),
            max_fock=cfg.truncation.max_fock)
    except spectra.NonConvergenceError as exc:
        report = exc.report
    d = spectra.eigh(ops.build_hamiltonian(spec, report.n_fock_final))
    parity = ops.parity_operator(spec, report.n_fock_final)
    pexp = np.einsum("ik,i,ik->k", d.states, np.diag(parity), d.states)
    for k in range(min(n_levels, d.dim)):
        sink.write([k, d.energies[k], pexp[k]])
    summary.points.append({"n_fock": report.n_fock_final, **report.as_dict()})
    summary.all_converged = report.converged
    summary.results = {"gap": spectra.gap(d), "ground_energy": float(d.energies[0]),
                       "lambda": spec.lam}


def _cmd_gap_scan(cfg: RunConfig, sink: CsvSink, summary: RunSummary, workers: int) -> None:
    m = cfg.model
    template = cfg.hamiltonian_spec()
    at_critical = m.coupling == "critical"
    if m.family == "dicke":
        axis, grid = scaling.Axis.ATOM_NUMBER, cfg.grids.n_atoms
    else:
        axis, grid = scaling.Axis.OMEGA, cfg.grids.omega
    n0 = _truncation_n0(cfg)
    tasks = []
    for value in grid:
        spec = (template.replace(omega=float(value)) if axis is scaling.Axis.OMEGA
                else template.replace(n_atoms=int(value)))
        if at_critical:
            spec = spec.replace(lam=ops.critical_coupling(spec.family, spec.omega, spec.gap_atom))
        tasks.append((spec, axis, value, cfg.tolerances.convergence_tol, n0,
                      cfg.truncation.max_fock))
    points = []
    for p in ordered_map(scaling._gap_task, tasks, workers):
        sink.write([p.axis_value, p.gap, p.n_fock, p.converged])
        points.append(p)
        summary.points.append({"axis_value": p.axis_value, **p.report.as_dict()})
    summary.all_converged = all(p.converged for p in points)
    good = [(p.axis_value, p.gap) for p in points if p.converged]
    fit = (scaling.loglog_fit(scaling.trim_leading(good, drop_largest_x=axis is scaling.Axis.OMEGA))
           if len(good) >= 3 else None)
    target = cfg.targets.slope
    if target is None and at_critical:
        target = 4.0 / 3.0 if m.family == "rabi" else -1.0 / 3.0
    summary.fits.append(_slope_entry(f"log gap vs log {axis.value}", fit, target,
                                     cfg.tolerances.exponent_tol))


def _sweep_task(args) -> thermal.CorrelationPoint:
    spec, z_prime, tol, n0, max_fock = args
    return thermal.half_chain_point(spec, z_prime, tol, n0, max_fock)


def _predicted_for(cfg: RunConfig, lam: float, z_prime: float) -> scaling.Table1Prediction:
    lam_c = ops.critical_coupling(cfg.model.family, cfg.model.omega, cfg.model.gap_atom)
    return scaling.predict_table1(scaling.regime_of(lam / lam_c), z_prime)


def _cell_tolerance(cfg: RunConfig, pred: scaling.Table1Prediction) -> float:
    marginal = pred.regime is scaling.Regime.CRITICAL and abs(pred.z_prime - 1.5) < 1e-12
    return cfg.tolerances.delta_tol_marginal if marginal else cfg.tolerances.delta_tol


def _fit_points(points: list[thermal.CorrelationPoint]):
    good = [(p.beta, p.c_half) for p in points if p.converged]
    if len(good) < 3:
        return None
    return scaling.loglog_fit(scaling.trim_leading(good))


def _cmd_corr_sweep(cfg: RunConfig, sink: CsvSink, summary: RunSummary, workers: int) -> None:
    lam = float(cfg.model.coupling)
    omegas = cfg.grids.omega
    n0 = _truncation_n0(cfg)
    tasks = [(cfg.hamiltonian_spec(omega=w, lam=lam), zp, cfg.tolerances.convergence_tol, n0,
              cfg.truncation.max_fock) for zp in cfg.grids.z_prime for w in omegas]
    by_z: dict[float, list] = {zp: [] for zp in cfg.grids.z_prime}
    for (_, zp, *_), p in zip(tasks, ordered_map(_sweep_task, tasks, workers)):
        sink.write([zp, p.omega, p.beta, p.n_fock, p.c_half, p.converged])
        by_z[zp].append(p)
        summary.points.append({"z_prime": zp, "omega": p.omega, **p.report.as_dict()})
    summary.all_converged = all(p.converged for pts in by_z.values() for p in pts)
    for zp, pts in by_z.items():
        fit = _fit_points(pts)
        pred = _predicted_for(cfg, lam, zp)
        cls = scaling.classify(fit, cfg.tolerances.r2_min, cfg.tolerances.resid_max) if fit else None
        target = None if pred.is_nsi else 2.0 * pred.predicted_delta
        entry = _slope_entry(f"log C_x(beta/2) vs log beta, z'={zp}", fit, target,
                             2.0 * _cell_tolerance(cfg, pred))
        entry["classification"] = cls.label() if cls else None
        if pred.is_nsi:
            entry["pass"] = bool(cls is not None and not cls.is_power_law)
        summary.fits.append(entry)


def _cmd_table1(cfg: RunConfig, sink: CsvSink, summary: RunSummary, workers: int) -> None:
    plan = scan_plan(cfg)
    omegas = cfg.grids.omega
    n0 = _truncation_n0(cfg)
    tasks = [(cfg.hamiltonian_spec(omega=w, lam=lam), zp, cfg.tolerances.convergence_tol, n0,
              cfg.truncation.max_fock) for lam, zp in plan for w in omegas]
    results = ordered_map(_sweep_task, tasks, workers)
    matrix: dict[float, dict] = {lam: {} for lam in cfg.grids.coupling}
    all_converged = True
    for lam, zp in plan:
        pts = [next(results) for _ in omegas]
        all_converged &= all(p.converged for p in pts)
        for p in pts:
            summary.points.append({"lambda": lam, "z_prime": zp, "omega": p.omega,
                                   "beta": p.beta, "c_half": p.c_half, **p.report.as_dict()})
        fit = _fit_points(pts)
        pred = _predicted_for(cfg, lam, zp)
        cls = scaling.classify(fit, cfg.tolerances.r2_min, cfg.tolerances.resid_max) if fit else None
        delta = fit.slope / 2.0 if fit else None
        tol = _cell_tolerance(cfg, pred)
        if pred.is_nsi:
            ok = cls is not None and not cls.is_power_law
            err = ""
        else:
            ok = delta is not None and abs(delta - pred.predicted_delta) <= tol
            err = abs(delta - pred.predicted_delta) if delta is not None else ""
        label = cls.label() if cls else "unfitted"
        sink.write([lam, zp, label, "NSI" if pred.is_nsi else pred.predicted_delta, err])
        cell = {"lambda": lam, "z_prime": zp, "measured": label, "fit_delta": delta,
                "fit": fit.as_dict() if fit else None,
                "predicted": "NSI" if pred.is_nsi else pred.predicted_delta,
                "tolerance": tol, "pass": bool(ok),
                "monotone_increasing": bool(np.all(np.diff([p.c_half for p in pts]) > 0))}
        matrix[lam][zp] = cell
        summary.fits.append({"name": f"table1 lambda={lam} z'={zp}", **cell})
    summary.all_converged = all_converged
    summary.results = {
        "z_prime": cfg.grids.z_prime,
        "lambda": cfg.grids.coupling,
        "measured": [[matrix[lam][zp]["measured"] for zp in cfg.grids.z_prime]
                     for lam in cfg.grids.coupling],
        "predicted": [[matrix[lam][zp]["predicted"] for zp in cfg.grids.z_prime]
                      for lam in cfg.grids.coupling],
    }


def _cmd_eft_mc(cfg: RunConfig, sink: CsvSink, summary: RunSummary, workers: int) -> None:
    mc = cfg.mc
    if mc.source == "model":
        action = efield.effective_action_from_spec(cfg.hamiltonian_spec(), mc.beta, mc.n_sites,
                                                   u4=mc.quartic, u6=mc.sextic)
    else:
        action = efield.LatticeAction.from_beta(mc.beta, mc.n_sites, mc.kinetic, mc.mass2,
                                                mc.quartic, mc.sextic)
    est = efield.metropolis_run(action, mc.n_therm, mc.n_sweeps, mc.bin_size, mc.seed)
    for row in zip(est.tau_grid, est.c_mean, est.c_stderr):
        sink.write(row)
    summary.results = {
        "action": {"n_sites": action.n_sites, "spacing": action.spacing,
                   "kinetic": action.kinetic, "mass2": action.mass2,
                   "quartic": action.quartic, "sextic": action.sextic},
        "acceptance": est.acceptance, "step": est.step, "n_sweeps": est.n_sweeps,
        "n_therm": est.n_therm, "bin_size": est.bin_size,
        "x2_halves": est.x2_halves, "x2_halves_err": est.x2_halves_err,
    }
    if action.quartic == 0 and action.sextic == 0 and action.mass2 > 0:
        exact = np.array([efield.gaussian_corr_exact(action.kinetic, action.mass2, action.beta,
                                                     action.n_sites, k)
                          for k in range(action.n_sites)])
        z = np.abs(est.c_mean - exact) / est.c_stderr
        summary.fits.append({"name": "MC vs exact Gaussian propagator",
                             "max_abs_z": float(z.max()), "tolerance": cfg.tolerances.mc_sigma,
                             "pass": bool(z.max() <= cfg.tolerances.mc_sigma)})


def _cmd_matsubara(cfg: RunConfig, sink: CsvSink, summary: RunSummary, workers: int) -> None:
    beta, big_w = cfg.matsubara.beta, cfg.model.gap_atom
    worst = 0.0
    for j in cfg.matsubara.p_index:
        p = 2.0 * math.pi * j / beta
        res = efield.matsubara_pi(p, big_w, beta, cfg.matsubara.cutoff)
        rel = abs(res.sum - res.closed) / abs(res.closed)
        worst = max(worst, rel)
        sink.write([p, res.closed, res.sum, rel])
    summary.fits.append({"name": "Matsubara sum vs closed form", "max_rel_deviation": worst,
                         "tolerance": cfg.tolerances.matsubara_rtol,
                         "pass": bool(worst < cfg.tolerances.matsubara_rtol)})


COMMAND_TABLE = {
    "spectrum": _cmd_spectrum,
    "gap-scan": _cmd_gap_scan,
    "corr-sweep": _cmd_corr_sweep,
    "table1": _cmd_table1,
    "eft-mc": _cmd_eft_mc,
    "matsubara-check": _cmd_matsubara,
}


def _default_path(cfg: RunConfig, suffix: str) -> Path:
    return Path(f"critlab-{cfg.command}.{suffix}")


def run(cfg: RunConfig, workers: int | None = None) -> RunSummary:
    """Execute ``cfg``; writes the CSV then the JSON summary.

    Raises ``OSError`` if an output cannot be written.
    """
    workers = worker_count() if workers is None else workers
    csv_path = Path(cfg.output.csv_path) if cfg.output.csv_path else _default_path(cfg, "csv")
    json_path = Path(cfg.output.json_path) if cfg.output.json_path else _default_path(cfg, "json")
    summary = RunSummary(command=cfg.command, config=cfg.to_dict(),
                         seed=cfg.mc.seed if cfg.command == "eft-mc" else None)
    start = time.perf_counter()
    with CsvSink(csv_path, CSV_COLUMNS[cfg.command]) as sink:
        COMMAND_TABLE[cfg.command](cfg, sink, summary, workers)
    summary.wall_clock_seconds = time.perf_counter() - start
    summary.exit_code = EXIT_OK if summary.all_converged else EXIT_NONCONVERGED
    json_path.write_text(json.dumps(_jsonable(summary.to_dict()), indent=2) + "\n",
                         encoding="utf-8")
    return summary


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="criticality-lab",
        description="Superradiant criticality in the Rabi and Dicke models.")
    parser.add_argument("command", choices=list(COMMAND_TABLE))
    parser.add_argument("--config", required=True, help="YAML run configuration")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="SECTION.KEY=VALUE", help="override one configuration value")
    parser.add_argument("--out-csv", help="CSV output path")
    parser.add_argument("--out-json", help="JSON summary path")
    parser.add_argument("--seed", type=int, help="Monte Carlo seed (overrides mc.seed)")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = list(args.overrides)
    if args.out_csv:
        overrides.append(f"output.csv_path={json.dumps(args.out_csv)}")
    if args.out_json:
        overrides.append(f"output.json_path={json.dumps(args.out_json)}")
    if args.seed is not None:
        overrides.append(f"mc.seed={args.seed}")
    try:
        text = Path(args.config).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = parse_config(text, command=args.command, overrides=overrides)
        workers = worker_count()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        summary = run(cfg, workers)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        # parameter combinations only the model layer can reject, e.g. an unbounded action
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if summary.exit_code == EXIT_NONCONVERGED:
        print("warning: some grid points did not converge", file=sys.stderr)
    return summary.exit_code


if __name__ == "__main__":
    sys.exit(main())
