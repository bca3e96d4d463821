"""Truncated-basis matrices for the Rabi and Dicke Hamiltonians.

Basis ordering is fixed for every model: ``index = spin_index * n_fock + fock_index``.

* Rabi: spin index 0 is ``|up>`` (sigma_z = +1), index 1 is ``|down>``.
* Dicke: spin index ``k`` is the collective state ``|S=N/2, m=-N/2+k>``, i.e. ascending m.

All matrices are dense, real and symmetric.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

SYMMETRY_RTOL = 1e-12


class Family(str, enum.Enum):
    RABI = "rabi"
    DICKE = "dicke"


@dataclass(frozen=True)
class HamiltonianSpec:
    """Model family plus physical parameters.

    For Rabi, ``lam`` is the dimensionless coupling ``2g / sqrt(2 omega gap_atom)``.
    For Dicke, ``lam`` is the bare coupling J multiplying ``2/sqrt(N) (a+a^dag) sum sigma_x``.
    """

    family: Family
    omega: float
    gap_atom: float
    lam: float
    n_atoms: int = 1

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if not (self.omega > 0 and math.isfinite(self.omega)):
            raise ValueError(f"omega must be positive and finite, got {self.omega!r}")
        if not (self.gap_atom > 0 and math.isfinite(self.gap_atom)):
            raise ValueError(f"gap_atom must be positive and finite, got {self.gap_atom!r}")
        if not (self.lam >= 0 and math.isfinite(self.lam)):
            raise ValueError(f"lambda must be non-negative, got {self.lam!r}")
        if self.family is Family.DICKE and (int(self.n_atoms) != self.n_atoms or self.n_atoms < 1):
            raise ValueError(f"n_atoms must be a positive integer, got {self.n_atoms!r}")

    @property
    def spin_dim(self) -> int:
        return 2 if self.family is Family.RABI else int(self.n_atoms) + 1

    @property
    def bare_coupling(self) -> float:
        """g for Rabi (inverted from lambda), J for Dicke."""
        if self.family is Family.RABI:
            return self.lam * math.sqrt(self.omega * self.gap_atom / 2.0)
        return self.lam

    def replace(self, **changes) -> "HamiltonianSpec":
        fields = dict(family=self.family, omega=self.omega, gap_atom=self.gap_atom,
                      lam=self.lam, n_atoms=self.n_atoms)
        fields.update(changes)
        return HamiltonianSpec(**fields)


def critical_coupling(family: Family | str, omega: float, gap_atom: float) -> float:
    """Coupling at which the parity-symmetric ground state becomes unstable.

    Rabi: lambda = 1. Dicke with ``H = w n + W sum s_z + 2J/sqrt(N) (a+a^dag) sum s_x``:
    the mean-field soft-mode condition ``16 J^2 = 2 w W`` gives ``J_c = sqrt(2 w W) / 4``.
    """
    family = Family(family)
    if family is Family.RABI:
        return 1.0
    return math.sqrt(2.0 * omega * gap_atom) / 4.0


@dataclass(frozen=True)
class BosonOps:
    n_fock: int
    a: np.ndarray
    a_dag: np.ndarray
    number: np.ndarray
    x_disp: np.ndarray


@dataclass(frozen=True)
class CollectiveSpinOps:
    n_atoms: int
    s_x: np.ndarray
    s_z: np.ndarray


def boson_ops(n_fock: int, omega: float) -> BosonOps:
    """Ladder, number and displacement matrices on a truncated Fock space.

    The displacement is ``(a + a^dag) / sqrt(2 omega)`` so that ``[x, p] = i`` away from
    the truncation corner, with ``p = i sqrt(omega/2) (a^dag - a)``.
    """
    if int(n_fock) != n_fock or n_fock < 2:
        raise ValueError(f"n_fock must be an integer >= 2, got {n_fock!r}")
    if not omega > 0:
        raise ValueError(f"omega must be positive, got {omega!r}")
    n_fock = int(n_fock)
    a = np.diag(np.sqrt(np.arange(1, n_fock, dtype=float)), k=1)
    a_dag = a.T.copy()
    number = np.diag(np.arange(n_fock, dtype=float))
    x_disp = (a + a_dag) / math.sqrt(2.0 * omega)
    return BosonOps(n_fock=n_fock, a=a, a_dag=a_dag, number=number, x_disp=x_disp)


def momentum(ops: BosonOps, omega: float) -> np.ndarray:
    """Complex momentum matrix conjugate to ``ops.x_disp``."""
    return 1j * math.sqrt(omega / 2.0) * (ops.a_dag - ops.a)


def collective_spin_ops(n_atoms: int) -> CollectiveSpinOps:
    if int(n_atoms) != n_atoms or n_atoms < 1:
        raise ValueError(f"n_atoms must be a positive integer, got {n_atoms!r}")
    n_atoms = int(n_atoms)
    s = n_atoms / 2.0
    m = np.arange(-s, s + 1.0)
    s_z = np.diag(m)
    # <m+1| S_+ |m> = sqrt(S(S+1) - m(m+1))
    raise_elems = np.sqrt(np.maximum(s * (s + 1.0) - m[:-1] * (m[:-1] + 1.0), 0.0))
    s_plus = np.diag(raise_elems, k=-1)
    s_x = 0.5 * (s_plus + s_plus.T)
    return CollectiveSpinOps(n_atoms=n_atoms, s_x=s_x, s_z=s_z)


def _spin_factors(spec: HamiltonianSpec) -> tuple[np.ndarray, np.ndarray]:
    """(diagonal spin energy term, spin operator multiplying (a+a^dag)), couplings included."""
    if spec.family is Family.RABI:
        sz = np.diag([1.0, -1.0])
        sx = np.array([[0.0, 1.0], [1.0, 0.0]])
        return spec.gap_atom * sz, spec.bare_coupling * sx
    ops = collective_spin_ops(spec.n_atoms)
    return (2.0 * spec.gap_atom * ops.s_z,
            (4.0 * spec.lam / math.sqrt(spec.n_atoms)) * ops.s_x)


def build_hamiltonian(spec: HamiltonianSpec, n_fock: int) -> np.ndarray:
    """Dense Hamiltonian in the ``spin (x) Fock`` basis.

    Rabi: ``w n + W s_z + g s_x (a + a^dag)``.
    Dicke: ``w n + 2W S_z + (4J/sqrt(N)) (a + a^dag) S_x`` in the S = N/2 sector.
    """
    bos = boson_ops(n_fock, spec.omega)
    spin_diag, spin_coupling = _spin_factors(spec)
    eye_spin = np.eye(spec.spin_dim)
    eye_fock = np.eye(bos.n_fock)
    h = spec.omega * np.kron(eye_spin, bos.number)
    h += np.kron(spin_diag, eye_fock)
    h += np.kron(spin_coupling, bos.a + bos.a_dag)
    return 0.5 * (h + h.T)


def parity_operator(spec: HamiltonianSpec, n_fock: int) -> np.ndarray:
    """Diagonal Z2 parity ``(-1)^n`` times the product of atomic sigma_z.

    For Dicke states ``|N/2, m>`` the product of sigma_z equals ``(-1)^(N/2 - m)``
    (one sign flip per lowered spin), which reduces to the Rabi sigma_z for N = 1.
    """
    boson_ops(n_fock, spec.omega)  # argument validation
    photon = (-1.0) ** np.arange(n_fock)
    if spec.family is Family.RABI:
        spin = np.array([1.0, -1.0])
    else:
        n_down = np.arange(spec.n_atoms, -1, -1)  # N/2 - m for ascending m
        spin = (-1.0) ** n_down
    return np.diag(np.kron(spin, photon))


def embed_photon_operator(op: np.ndarray, spin_dim: int) -> np.ndarray:
    """Lift a Fock-space operator to the full basis as ``1_spin (x) op``."""
    return np.kron(np.eye(spin_dim), op)


def displacement_operator(spec: HamiltonianSpec, n_fock: int) -> np.ndarray:
    """The measured order parameter x embedded in the full tensor basis."""
    return embed_photon_operator(boson_ops(n_fock, spec.omega).x_disp, spec.spin_dim)


def number_operator(spec: HamiltonianSpec, n_fock: int) -> np.ndarray:
    return embed_photon_operator(boson_ops(n_fock, spec.omega).number, spec.spin_dim)


def is_symmetric(mat: np.ndarray, rtol: float = SYMMETRY_RTOL) -> bool:
    scale = float(np.max(np.abs(mat), initial=0.0)) or 1.0
    return bool(np.max(np.abs(mat - mat.T), initial=0.0) <= rtol * scale)
