"""Thermal averages and imaginary-time correlators from a full spectrum.

Everything is evaluated with energies shifted by the ground energy so every
Boltzmann exponent is non-positive; no term can overflow.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import operators as ops
from .spectra import (DEFAULT_MAX_FOCK, DEFAULT_N0, ConvergenceReport, NonConvergenceError,
                      SpectralDecomposition, converge_truncation)

log = logging.getLogger(__name__)

# exp(-740) is already below the smallest normal double
UNDERFLOW_LOG = -740.0


def beta_schedule(omega: float, z_prime: float) -> float:
    """beta = omega ** (-z_prime). The single routine every caller uses."""
    return float(omega) ** (-float(z_prime))


@dataclass(frozen=True)
class ThermalWeights:
    beta: float
    shifted_log_weights: np.ndarray
    log_partition: float

    @property
    def normalized(self) -> np.ndarray:
        return np.exp(self.shifted_log_weights - self.log_partition)


def thermal_weights(d: SpectralDecomposition, beta: float) -> ThermalWeights:
    if not beta >= 0:
        raise ValueError(f"beta must be non-negative, got {beta!r}")
    logw = -beta * (d.energies - d.energies[0])
    logw[0] = 0.0
    log_z = float(np.logaddexp.reduce(logw))
    return ThermalWeights(beta=float(beta), shifted_log_weights=logw, log_partition=log_z)


def _check_op(d: SpectralDecomposition, op: np.ndarray) -> None:
    if op.shape != (d.dim, d.dim):
        raise ValueError(f"operator shape {op.shape} does not match dimension {d.dim}")


def thermal_expectation(d: SpectralDecomposition, op: np.ndarray, beta: float) -> float:
    _check_op(d, op)
    w = thermal_weights(d, beta).normalized
    diag = np.einsum("im,ij,jm->m", d.states, op, d.states)
    return float(w @ diag)


def corr_from_elements(d: SpectralDecomposition, elements_sq: np.ndarray, beta: float,
                       tau: float) -> float:
    """Correlator from precomputed ``|<m|O|n>|^2``; reuse across many tau.

    C(tau) = (1/Z) sum_{mn} exp(-(beta - tau) e_m - tau e_n) |O_mn|^2, with e = E - E_0.
    """
    if not (0.0 <= tau <= beta):
        raise ValueError(f"tau must lie in [0, beta]={beta}, got {tau!r}")
    if tau > 0.5 * beta:
        tau = beta - tau
    e = d.energies - d.energies[0]
    left = -(beta - tau) * e
    right = -tau * e
    log_z = float(np.logaddexp.reduce(-beta * e))
    # Terms below UNDERFLOW_LOG vanish at double precision; drop whole rows/cols early.
    keep_l = left > UNDERFLOW_LOG
    keep_r = right > UNDERFLOW_LOG
    u = np.exp(left[keep_l])
    v = np.exp(right[keep_r])
    total = u @ elements_sq[np.ix_(keep_l, keep_r)] @ v
    return float(total * math.exp(-log_z))


def imaginary_time_corr(d: SpectralDecomposition, op: np.ndarray, beta: float,
                        tau: float) -> float:
    """<O(tau) O(0)>_beta for a real symmetric O."""
    _check_op(d, op)
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta!r}")
    elems = d.transform(op)
    return corr_from_elements(d, elems * elems, beta, tau)


def ground_moment(d: SpectralDecomposition, op: np.ndarray, k: int) -> float:
    _check_op(d, op)
    if k not in (1, 2):
        raise ValueError(f"k must be 1 or 2, got {k!r}")
    g = d.states[:, 0]
    v = op @ g
    return float(g @ v) if k == 1 else float(v @ v)


@dataclass(frozen=True)
class CorrelationPoint:
    omega: float
    beta: float
    n_fock: int
    c_half: float
    converged: bool
    report: ConvergenceReport | None = None


@dataclass
class CorrelationSeries:
    z_prime: float
    points: list[CorrelationPoint] = field(default_factory=list)

    @property
    def converged_points(self) -> list[CorrelationPoint]:
        return [p for p in self.points if p.converged]


def _half_chain_observable(spec: ops.HamiltonianSpec, beta: float):
    def observable(d: SpectralDecomposition) -> float:
        n_fock = d.dim // spec.spin_dim
        x = ops.displacement_operator(spec, n_fock)
        elems = d.transform(x)
        return corr_from_elements(d, elems * elems, beta, 0.5 * beta)
    return observable


def half_chain_point(spec: ops.HamiltonianSpec, z_prime: float, tol: float,
                     n0: int | None = None, max_fock: int = DEFAULT_MAX_FOCK) -> CorrelationPoint:
    """One converged C_x(beta/2) at beta = omega^(-z')."""
    beta = beta_schedule(spec.omega, z_prime)
    n0 = n0 or DEFAULT_N0[spec.family.value]
    try:
        value, report = converge_truncation(
            lambda n: ops.build_hamiltonian(spec, n),
            _half_chain_observable(spec, beta), tol=tol, n0=n0, max_fock=max_fock)
    except NonConvergenceError as exc:
        log.warning("C_x(beta/2) not converged at omega=%g: %s", spec.omega, exc)
        value, report = exc.value, exc.report
    return CorrelationPoint(omega=spec.omega, beta=beta, n_fock=report.n_fock_final,
                            c_half=value, converged=report.converged, report=report)


def _point_task(args):
    return half_chain_point(*args)


def half_chain_sweep(spec_template: ops.HamiltonianSpec, z_prime: float, omegas,
                     tol: float = 1e-6, n0: int | None = None,
                     max_fock: int = DEFAULT_MAX_FOCK, workers: int = 1) -> CorrelationSeries:
    """C_x(beta/2) along ``beta = omega^(-z')`` for each omega in ``omegas``.

    Points that fail to converge are kept with ``converged=False``; the sweep
    never aborts. Output order follows ``omegas`` regardless of ``workers``.
    """
    if not z_prime > 0:
        raise ValueError(f"z_prime must be positive, got {z_prime!r}")
    omegas = [float(w) for w in omegas]
    if any(w <= 0 for w in omegas):
        raise ValueError("omegas must be positive")
    if any(b >= a for a, b in zip(omegas, omegas[1:])):
        raise ValueError("omegas must be strictly descending")
    tasks = [(spec_template.replace(omega=w), z_prime, tol, n0, max_fock) for w in omegas]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            points = list(pool.map(_point_task, tasks))
    else:
        points = [_point_task(t) for t in tasks]
    return CorrelationSeries(z_prime=float(z_prime), points=points)
