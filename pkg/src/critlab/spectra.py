"""Dense eigendecomposition, gaps and Fock-truncation convergence."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

log = logging.getLogger(__name__)

DEFAULT_MAX_FOCK = 8192
ABS_FLOOR = 1e-12
DEFAULT_N0 = {"rabi": 16, "dicke": 32}


class NonConvergenceError(RuntimeError):
    """Truncation cap reached before the observable settled.

    Carries the last value and the report so callers may still record them.
    """

    def __init__(self, value: float, report: "ConvergenceReport"):
        super().__init__(
            f"observable not converged at n_fock={report.n_fock_final} "
            f"(last relative change {report.last_rel_change:.3g})"
        )
        self.value = value
        self.report = report


@dataclass(frozen=True)
class SpectralDecomposition:
    energies: np.ndarray
    states: np.ndarray  # columns are eigenvectors

    @property
    def dim(self) -> int:
        return int(self.energies.shape[0])

    def transform(self, op: np.ndarray) -> np.ndarray:
        """Matrix elements <m|op|n> in the eigenbasis."""
        if op.shape != (self.dim, self.dim):
            raise ValueError(f"operator shape {op.shape} does not match dimension {self.dim}")
        return self.states.T @ op @ self.states


@dataclass(frozen=True)
class ConvergenceReport:
    n_fock_final: int
    iterations: int
    last_rel_change: float
    converged: bool
    tolerance: float

    def as_dict(self) -> dict:
        return {
            "n_fock_final": self.n_fock_final,
            "iterations": self.iterations,
            "last_rel_change": self.last_rel_change,
            "converged": self.converged,
            "tolerance": self.tolerance,
        }


def eigh(h: np.ndarray) -> SpectralDecomposition:
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {h.shape}")
    energies, states = np.linalg.eigh(h)
    return SpectralDecomposition(energies=energies, states=states)


def gap(d: SpectralDecomposition) -> float:
    """Global gap E_1 - E_0 over both parity sectors."""
    if d.dim < 2:
        raise ValueError("gap needs at least two levels")
    return float(d.energies[1] - d.energies[0])


def converge_truncation(
    build: Callable[[int], np.ndarray],
    observable: Callable[[SpectralDecomposition], float],
    tol: float = 1e-6,
    n0: int = 16,
    max_fock: int = DEFAULT_MAX_FOCK,
) -> tuple[float, ConvergenceReport]:
    """Double ``n_fock`` from ``n0`` until ``observable`` changes by at most ``tol`` (relative).

    Raises :class:`NonConvergenceError` when ``max_fock`` is reached first.
    """
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol!r}")
    if n0 < 4:
        raise ValueError(f"n0 must be >= 4, got {n0!r}")
    n = int(n0)
    prev = float(observable(eigh(build(n))))
    iterations = 1
    rel = float("inf")
    while 2 * n <= max_fock:
        n *= 2
        cur = float(observable(eigh(build(n))))
        iterations += 1
        rel = abs(cur - prev) / max(abs(cur), ABS_FLOOR)
        log.debug("n_fock=%d value=%.12g rel_change=%.3g", n, cur, rel)
        if rel <= tol:
            return cur, ConvergenceReport(n, iterations, rel, True, tol)
        prev = cur
    raise NonConvergenceError(prev, ConvergenceReport(n, iterations, rel, False, tol))
