"""Power-law fits, scale-invariance classification and the expected-exponent table."""
from __future__ import annotations

import enum
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import operators as ops
from .spectra import (DEFAULT_MAX_FOCK, DEFAULT_N0, ConvergenceReport, NonConvergenceError,
                      converge_truncation, gap)
from .thermal import CorrelationSeries

log = logging.getLogger(__name__)

R2_MIN = 0.995
RESID_MAX = 0.05
CRITICAL_ATOL = 1e-12
# Below this many points the leading (least asymptotic) point is kept.
TRIM_MIN_POINTS = 5


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    r_squared: float
    max_abs_residual: float
    n_points: int

    def as_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "r_squared": self.r_squared,
                "max_abs_residual": self.max_abs_residual, "n_points": self.n_points}


def loglog_fit(points: Sequence[tuple[float, float]]) -> ScalingFit:
    """Ordinary least squares of log y against log x."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be a sequence of (x, y) pairs")
    if pts.shape[0] < 3:
        raise ValueError(f"need at least 3 points, got {pts.shape[0]}")
    if not np.all(np.isfinite(pts)) or np.any(pts <= 0):
        raise ValueError("all coordinates must be finite and strictly positive")
    lx, ly = np.log(pts[:, 0]), np.log(pts[:, 1])
    design = np.column_stack([lx, np.ones_like(lx)])
    (slope, intercept), *_ = np.linalg.lstsq(design, ly, rcond=None)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    ss_res = float(np.sum(resid ** 2))
    # A fit exact to rounding (e.g. a constant) has r^2 = 1 even when ss_tot is pure noise.
    exact = ss_res <= (64 * np.finfo(float).eps) ** 2 * max(1.0, float(np.sum(ly ** 2)))
    r2 = 1.0 if exact or ss_tot == 0.0 else max(0.0, 1.0 - ss_res / ss_tot)
    return ScalingFit(slope=float(slope), intercept=float(intercept), r_squared=r2,
                      max_abs_residual=float(np.max(np.abs(resid))), n_points=int(pts.shape[0]))


def trim_leading(points: Sequence[tuple[float, float]],
                 drop_largest_x: bool = False) -> list[tuple[float, float]]:
    """Drop the point farthest from the asymptotic regime once there are enough to spare it.

    That is the smallest x (smallest beta or N) by default, or the largest x when
    the asymptotic limit is x -> 0 (the photon-frequency axis).
    """
    pts = sorted(points, key=lambda p: p[0], reverse=drop_largest_x)
    return pts[1:] if len(pts) >= TRIM_MIN_POINTS else list(pts)


class ScaleKind(str, enum.Enum):
    POWER_LAW = "power_law"
    NSI = "nsi"


@dataclass(frozen=True)
class ScaleClass:
    kind: ScaleKind
    delta: float | None = None

    @property
    def is_power_law(self) -> bool:
        return self.kind is ScaleKind.POWER_LAW

    def label(self, fmt: str = "{:.6f}") -> str:
        return fmt.format(self.delta) if self.is_power_law else "NSI"


def classify(fit: ScalingFit, r2_min: float = R2_MIN, resid_max: float = RESID_MAX) -> ScaleClass:
    # C ~ tau^(2 Delta), so the carried dimension is half the slope.
    if fit.r_squared >= r2_min and fit.max_abs_residual <= resid_max:
        return ScaleClass(ScaleKind.POWER_LAW, fit.slope / 2.0)
    return ScaleClass(ScaleKind.NSI)


class Regime(str, enum.Enum):
    BELOW = "below"
    CRITICAL = "critical"
    ABOVE = "above"


class Phase(str, enum.Enum):
    NORMAL = "normal"
    CRITICAL = "critical"
    SUPERRADIANT = "superradiant"


def phase_classifier(lam: float) -> Phase:
    """Sign of the (1 - lambda^2) mass term, lambda in units of its critical value."""
    if lam < 0:
        raise ValueError(f"lambda must be non-negative, got {lam!r}")
    if abs(lam - 1.0) <= CRITICAL_ATOL:
        return Phase.CRITICAL
    return Phase.NORMAL if lam < 1.0 else Phase.SUPERRADIANT


def regime_of(lam: float) -> Regime:
    return {Phase.NORMAL: Regime.BELOW, Phase.CRITICAL: Regime.CRITICAL,
            Phase.SUPERRADIANT: Regime.ABOVE}[phase_classifier(lam)]


@dataclass(frozen=True)
class Table1Prediction:
    regime: Regime
    z_prime: float
    predicted_delta: float | None  # None means no scale invariance

    @property
    def is_nsi(self) -> bool:
        return self.predicted_delta is None


def predict_table1(regime: Regime | str, z_prime: float) -> Table1Prediction:
    """Observed dimension of x at fixed beta = omega^(-z')."""
    regime = Regime(regime)
    if not z_prime > 0:
        raise ValueError(f"z_prime must be positive, got {z_prime!r}")
    inv = 1.0 / z_prime
    if regime is Regime.BELOW:
        delta = inv - 0.5 if z_prime <= 1.0 else None
    elif regime is Regime.CRITICAL:
        delta = inv - 0.25 if z_prime <= 1.5 else None
    else:
        delta = inv
    return Table1Prediction(regime=regime, z_prime=float(z_prime), predicted_delta=delta)


def fit_correlation_series(series: CorrelationSeries) -> ScalingFit:
    """Fit log C_x(beta/2) against log beta over converged points."""
    pts = [(p.beta, p.c_half) for p in series.converged_points]
    return loglog_fit(trim_leading(pts))


class Axis(str, enum.Enum):
    OMEGA = "omega"
    ATOM_NUMBER = "n_atoms"


@dataclass(frozen=True)
class GapPoint:
    axis_value: float
    gap: float
    n_fock: int
    converged: bool
    report: ConvergenceReport


@dataclass(frozen=True)
class GapScan:
    points: list[GapPoint]
    fit: ScalingFit | None


def _gap_task(args) -> GapPoint:
    spec, axis, axis_value, tol, n0, max_fock = args
    try:
        value, report = converge_truncation(lambda n: ops.build_hamiltonian(spec, n),
                                            lambda d: gap(d), tol=tol, n0=n0, max_fock=max_fock)
    except NonConvergenceError as exc:
        log.warning("gap not converged at %s=%g: %s", axis.value, axis_value, exc)
        value, report = exc.value, exc.report
    return GapPoint(axis_value=float(axis_value), gap=float(value), n_fock=report.n_fock_final,
                    converged=report.converged, report=report)


def gap_scan(spec_template: ops.HamiltonianSpec, axis: Axis | str, grid: Sequence[float],
             tol: float = 1e-6, at_critical: bool = True, n0: int | None = None,
             max_fock: int = DEFAULT_MAX_FOCK, workers: int = 1) -> GapScan:
    """Converged gaps along ``grid`` plus the log-log fit (None if < 3 converged points).

    With ``at_critical`` the coupling is pinned to the critical value of each grid point;
    otherwise the template's coupling is used as given.
    """
    axis = Axis(axis)
    if len(grid) < 4:
        raise ValueError(f"grid needs at least 4 values, got {len(grid)}")
    if axis is Axis.ATOM_NUMBER and spec_template.family is not ops.Family.DICKE:
        raise ValueError("the atom-number axis only applies to the Dicke model")
    n0 = n0 or DEFAULT_N0[spec_template.family.value]
    tasks = []
    for value in grid:
        if axis is Axis.OMEGA:
            spec = spec_template.replace(omega=float(value))
        else:
            spec = spec_template.replace(n_atoms=int(value))
        if at_critical:
            spec = spec.replace(lam=ops.critical_coupling(spec.family, spec.omega, spec.gap_atom))
        tasks.append((spec, axis, value, tol, n0, max_fock))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            points = list(pool.map(_gap_task, tasks))
    else:
        points = [_gap_task(t) for t in tasks]
    good = [(p.axis_value, p.gap) for p in points if p.converged]
    fit = loglog_fit(trim_leading(good, drop_largest_x=axis is Axis.OMEGA)) if len(good) >= 3 else None
    return GapScan(points=points, fit=fit)


def gap_exponent(spec_template: ops.HamiltonianSpec, axis: Axis | str, grid: Sequence[float],
                 tol: float = 1e-6, **kwargs) -> ScalingFit:
    scan = gap_scan(spec_template, axis, grid, tol, **kwargs)
    if scan.fit is None:
        raise NonConvergenceError(
            math.nan, max((p.report for p in scan.points), key=lambda r: r.n_fock_final))
    return scan.fit
