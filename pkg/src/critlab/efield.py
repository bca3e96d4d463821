"""Lattice Monte Carlo of the photon effective action, with exact oracles.

The action on a periodic chain of ``M`` sites with spacing ``a = beta / M`` is

    S = sum_i [ (K/2) (x_{i+1} - x_i)^2 / a + a (m2/2 x_i^2 + u4 x_i^4 + u6 x_i^6) ].
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import operators as ops

MIN_SITES = 8
TUNE_EVERY = 10
TARGET_ACCEPTANCE = (0.4, 0.6)


@dataclass(frozen=True)
class LatticeAction:
    n_sites: int
    spacing: float
    kinetic: float
    mass2: float
    quartic: float = 0.0
    sextic: float = 0.0

    def __post_init__(self):
        if int(self.n_sites) != self.n_sites or self.n_sites < MIN_SITES:
            raise ValueError(f"n_sites must be an integer >= {MIN_SITES}, got {self.n_sites!r}")
        if not self.spacing > 0:
            raise ValueError(f"spacing must be positive, got {self.spacing!r}")
        if not self.kinetic > 0:
            raise ValueError(f"kinetic must be positive, got {self.kinetic!r}")
        if self.mass2 < 0 and self.quartic <= 0:
            raise ValueError("unbounded action: negative mass2 requires quartic > 0")
        if self.quartic < 0 and self.sextic <= 0:
            raise ValueError("unbounded action: negative quartic requires sextic > 0")

    @classmethod
    def from_beta(cls, beta: float, n_sites: int, kinetic: float, mass2: float,
                  quartic: float = 0.0, sextic: float = 0.0) -> "LatticeAction":
        return cls(n_sites=int(n_sites), spacing=beta / n_sites, kinetic=kinetic,
                   mass2=mass2, quartic=quartic, sextic=sextic)

    @property
    def beta(self) -> float:
        return self.n_sites * self.spacing

    def potential(self, x: np.ndarray) -> np.ndarray:
        x2 = x * x
        return 0.5 * self.mass2 * x2 + self.quartic * x2 * x2 + self.sextic * x2 * x2 * x2


@dataclass(frozen=True)
class FieldConfig:
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.values.ndim != 1:
            raise ValueError("field configuration must be one-dimensional")


def action_value(action: LatticeAction, cfg: FieldConfig | np.ndarray) -> float:
    x = cfg.values if isinstance(cfg, FieldConfig) else np.asarray(cfg, dtype=float)
    if x.shape != (action.n_sites,):
        raise ValueError(f"configuration has shape {x.shape}, expected ({action.n_sites},)")
    dx = np.roll(x, -1) - x
    kin = 0.5 * action.kinetic * np.sum(dx * dx) / action.spacing
    return float(kin + action.spacing * np.sum(action.potential(x)))


@dataclass(frozen=True)
class McEstimate:
    tau_grid: np.ndarray
    c_mean: np.ndarray
    c_stderr: np.ndarray
    acceptance: float
    n_sweeps: int
    n_therm: int
    seed: int
    step: float
    bin_size: int
    config_means: np.ndarray  # per-sweep (1/M) sum_i x_i
    x2_halves: tuple[float, float]
    x2_halves_err: tuple[float, float]


def jackknife(bins: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean and jackknife standard error over the leading (bin) axis."""
    bins = np.asarray(bins, dtype=float)
    nb = bins.shape[0]
    if nb < 2:
        raise ValueError("jackknife needs at least two bins")
    total = bins.sum(axis=0)
    loo = (total - bins) / (nb - 1)
    mean = loo.mean(axis=0)
    err = np.sqrt((nb - 1) / nb * np.sum((loo - mean) ** 2, axis=0))
    return total / nb, err


def _local_action(action: LatticeAction, x, left, right):
    k = 0.5 * action.kinetic / action.spacing
    return k * ((right - x) ** 2 + (x - left) ** 2) + action.spacing * action.potential(x)


def metropolis_run(action: LatticeAction, n_therm: int = 2000, n_sweeps: int = 100_000,
                   bin_size: int = 100, seed: int = 0) -> McEstimate:
    """Single-site Metropolis with checkerboard ordering.

    Sites of one parity do not interact, so each half-sweep updates them at once;
    this is the same Markov chain as visiting them one by one. The proposal width
    is tuned during thermalization and frozen afterwards.
    """
    if action.mass2 <= 0 and action.quartic <= 0 and action.sextic <= 0:
        raise ValueError("massless free action has an unnormalizable zero mode")
    if n_sweeps < 10 * bin_size:
        raise ValueError("n_sweeps must be at least 10 * bin_size")
    m = action.n_sites
    if m % 2:
        raise ValueError("checkerboard updates need an even number of sites")
    rng = np.random.default_rng(seed)
    x = np.zeros(m)
    step = math.sqrt(action.spacing / action.kinetic) * 2.0
    parities = (np.arange(0, m, 2), np.arange(1, m, 2))

    def sweep(step: float) -> int:
        accepted = 0
        for idx in parities:
            left = x[idx - 1]
            right = x[(idx + 1) % m]
            old = x[idx]
            new = old + step * rng.uniform(-1.0, 1.0, idx.size)
            ds = _local_action(action, new, left, right) - _local_action(action, old, left, right)
            ok = rng.random(idx.size) < np.exp(-np.maximum(ds, 0.0))
            x[idx] = np.where(ok, new, old)
            accepted += int(ok.sum())
        return accepted

    lo, hi = TARGET_ACCEPTANCE
    window = 0
    for i in range(n_therm):
        window += sweep(step)
        if (i + 1) % TUNE_EVERY == 0:
            rate = window / (TUNE_EVERY * m)
            if rate < lo or rate > hi:
                step *= min(max(rate / 0.5, 0.5), 2.0)
            window = 0

    n_bins = n_sweeps // bin_size
    n_meas = n_bins * bin_size
    corr_bins = np.zeros((n_bins, m))
    x2_bins = np.zeros(n_bins)
    means = np.empty(n_meas)
    accepted = 0
    for i in range(n_meas):
        accepted += sweep(step)
        f = np.fft.rfft(x)
        corr_bins[i // bin_size] += np.fft.irfft(f.real ** 2 + f.imag ** 2, n=m) / m
        x2_bins[i // bin_size] += float(x @ x) / m
        means[i] = x.mean()
    corr_bins /= bin_size
    x2_bins /= bin_size

    c_mean, c_err = jackknife(corr_bins)
    half = n_bins // 2
    (a_mean, a_err), (b_mean, b_err) = jackknife(x2_bins[:half]), jackknife(x2_bins[half:])
    return McEstimate(
        tau_grid=np.arange(m) * action.spacing, c_mean=c_mean, c_stderr=c_err,
        acceptance=accepted / (n_meas * m), n_sweeps=n_meas, n_therm=n_therm, seed=seed,
        step=step, bin_size=bin_size, config_means=means,
        x2_halves=(float(a_mean), float(b_mean)), x2_halves_err=(float(a_err), float(b_err)))


def gaussian_corr_exact(kinetic: float, mass2: float, beta: float, n_sites: int, k: int) -> float:
    """Exact <x_{i+k} x_i> of the free lattice action, by its lattice Matsubara sum.

    The quadratic form has eigenvalues ``(2K/a)(1 - cos q_n) + a m2`` on modes
    ``q_n = 2 pi n / M``, so ``C(k) = (1/M) sum_n cos(q_n k) / [(2K/a)(1 - cos q_n) + a m2]``.
    """
    if not mass2 > 0:
        raise ValueError(f"mass2 must be positive, got {mass2!r}")
    a = beta / n_sites
    k = int(k) % n_sites
    k = min(k, n_sites - k)
    n = np.arange(n_sites)
    q = 2.0 * np.pi * n / n_sites
    phase = 2.0 * np.pi * ((n * k) % n_sites) / n_sites
    denom = (2.0 * kinetic / a) * (1.0 - np.cos(q)) + a * mass2
    return float(np.sum(np.cos(phase) / denom) / n_sites)


def gaussian_corr_continuum(kinetic: float, mass2: float, beta: float, tau: float) -> float:
    w = math.sqrt(mass2 / kinetic)
    return math.cosh(w * (0.5 * beta - tau)) / (2.0 * math.sqrt(kinetic * mass2)
                                                 * math.sinh(0.5 * w * beta))


class MatsubaraCheck(NamedTuple):
    sum: float
    closed: float


def _is_bosonic(p: float, beta: float) -> bool:
    j = p * beta / (2.0 * math.pi)
    return abs(j - round(j)) <= 1e-9


def pi_closed_form(p: float, gap_atom: float, beta: float) -> float:
    """Second-order polarization ``-4 beta W / (p^2 + 4 W^2) * tanh(beta W / 2)``."""
    w = gap_atom
    return -4.0 * beta * w / (p * p + 4.0 * w * w) * math.tanh(0.5 * beta * w)


def pi_closed_form_coth(p: float, gap_atom: float, beta: float) -> float:
    """Variant with ``coth(beta W)`` in place of ``tanh(beta W / 2)``.

    Both share the zero-temperature limit; the tanh form is the one that equals
    the fermionic frequency sum at finite beta.
    """
    w = gap_atom
    return -4.0 * beta * w / (p * p + 4.0 * w * w) / math.tanh(beta * w)


def pi_ir_expansion(p: float, gap_atom: float, beta: float) -> float:
    """Small-p, large-beta form ``beta p^2 / (4 W^3) - beta / W``."""
    return beta * p * p / (4.0 * gap_atom ** 3) - beta / gap_atom


def matsubara_pi(p: float, gap_atom: float, beta: float, cutoff: int = 1_000_000) -> MatsubaraCheck:
    """Truncated fermionic sum of pi_1 + pi_2 next to its closed form.

    Sums ``1/((-i nu + W)(-i nu - i p - W)) + 1/((-i nu - W)(-i nu - i p + W))`` over
    ``nu_n = (2n+1) pi / beta`` for ``|n| <= cutoff``; both terms are added per frequency
    so the tail decays like ``1/nu^2``.
    """
    if cutoff < 1000:
        raise ValueError(f"cutoff must be >= 1000, got {cutoff!r}")
    if not gap_atom > 0:
        raise ValueError(f"gap_atom must be positive, got {gap_atom!r}")
    if not _is_bosonic(p, beta):
        raise ValueError(f"p={p!r} is not a bosonic Matsubara frequency for beta={beta!r}")
    w = gap_atom
    n = np.arange(-cutoff, cutoff + 1, dtype=float)
    nu = (2.0 * n + 1.0) * math.pi / beta
    z = -1j * nu
    terms = 1.0 / ((z + w) * (z - 1j * p - w)) + 1.0 / ((z - w) * (z - 1j * p + w))
    total = np.sum(terms)
    return MatsubaraCheck(sum=float(total.real), closed=pi_closed_form(p, w, beta))


def effective_action_from_spec(spec: ops.HamiltonianSpec, beta: float, n_sites: int,
                               u4: float = 1.0, u6: float = 0.0) -> LatticeAction:
    """Lattice action with the model's kinetic and mass coefficients.

    The quartic and sextic couplings are free inputs; for Dicke they are scaled
    by 1/N and 1/N^2.
    """
    if spec.family is ops.Family.RABI:
        lam, w, big_w = spec.lam, spec.omega, spec.gap_atom
        kinetic = 1.0 + lam * lam * w * w / (4.0 * big_w * big_w)
        mass2 = (1.0 - lam * lam) * w * w
        quartic, sextic = u4, u6
    else:
        lam_c = ops.critical_coupling(spec.family, spec.omega, spec.gap_atom)
        kinetic = 1.0
        mass2 = 4.0 * spec.omega / spec.gap_atom * (lam_c * lam_c - spec.lam * spec.lam)
        quartic, sextic = u4 / spec.n_atoms, u6 / spec.n_atoms ** 2
    return LatticeAction.from_beta(beta, n_sites, kinetic, mass2, quartic, sextic)


@dataclass(frozen=True)
class SymmetryProbe:
    seeds: tuple[int, ...]
    frac_positive: float
    mean_of_means: float
    std_of_means: float
    kurtosis_ratio: float  # <m^4> / <m^2>^2; 3 for a Gaussian, 1 for two sharp peaks

    def passes(self, min_frac: float = 0.1, max_ratio: float = 0.1) -> bool:
        both_signs = min_frac <= self.frac_positive <= 1.0 - min_frac
        return both_signs and abs(self.mean_of_means) <= max_ratio * self.std_of_means


def symmetry_breaking_probe(action: LatticeAction, seeds, n_therm: int = 1000,
                            n_sweeps: int = 5000, bin_size: int = 100) -> SymmetryProbe:
    """Pool configuration means from independent chains and summarize their distribution."""
    seeds = tuple(int(s) for s in seeds)
    means = np.concatenate([
        metropolis_run(action, n_therm, n_sweeps, bin_size, seed=s).config_means for s in seeds])
    m2 = float(np.mean(means ** 2))
    return SymmetryProbe(
        seeds=seeds, frac_positive=float(np.mean(means > 0)), mean_of_means=float(means.mean()),
        std_of_means=float(means.std()), kurtosis_ratio=float(np.mean(means ** 4)) / m2 ** 2)
