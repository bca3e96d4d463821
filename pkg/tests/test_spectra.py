from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from critlab import operators as ops
from critlab import spectra
from critlab.thermal import beta_schedule, corr_from_elements


def test_diagonal_input():
    d = spectra.eigh(np.diag([3.0, 1.0, 2.0]))
    np.testing.assert_array_equal(d.energies, [1.0, 2.0, 3.0])
    np.testing.assert_allclose(np.abs(d.states), np.eye(3)[:, [1, 2, 0]])


def test_pauli_x():
    d = spectra.eigh(np.array([[0.0, 1.0], [1.0, 0.0]]))
    np.testing.assert_allclose(d.energies, [-1.0, 1.0], atol=1e-15)


def test_reconstruction_identity():
    rng = np.random.default_rng(2024)
    m = rng.normal(size=(50, 50))
    h = 0.5 * (m + m.T)
    d = spectra.eigh(h)
    rebuilt = d.states @ np.diag(d.energies) @ d.states.T
    assert np.abs(h - rebuilt).max() < 1e-10 * np.abs(h).max()
    np.testing.assert_allclose(d.states.T @ d.states, np.eye(50), atol=1e-10)
    resid = np.linalg.norm(h @ d.states - d.states * d.energies, axis=0)
    assert resid.max() < 1e-9 * np.abs(h).max()


@pytest.mark.parametrize("omega, expected", [(0.3, 0.3), (3.0, 2.0)])
def test_decoupled_gap(omega, expected):
    h = ops.build_hamiltonian(ops.HamiltonianSpec("rabi", omega, 1.0, 0.0), 8)
    assert spectra.gap(spectra.eigh(h)) == pytest.approx(expected, abs=1e-14)


def test_gap_needs_two_levels():
    with pytest.raises(ValueError):
        spectra.gap(spectra.SpectralDecomposition(np.array([0.0]), np.eye(1)))


def test_decoupled_ground_energy_converges_on_first_doubling():
    spec = ops.HamiltonianSpec("rabi", 0.5, 1.0, 0.0)
    value, report = spectra.converge_truncation(
        lambda n: ops.build_hamiltonian(spec, n), lambda d: float(d.energies[0]), tol=1e-6, n0=16)
    assert value == -1.0
    assert report.converged and report.n_fock_final == 32 and report.iterations == 2


def test_critical_gap_converges_quickly():
    spec = ops.HamiltonianSpec("rabi", 0.05, 1.0, 1.0)
    _, report = spectra.converge_truncation(
        lambda n: ops.build_hamiltonian(spec, n), spectra.gap, tol=1e-6, n0=16)
    assert report.converged
    assert report.n_fock_final <= 256
    assert report.last_rel_change <= report.tolerance


def test_correlator_stable_beyond_final_truncation():
    spec = ops.HamiltonianSpec("rabi", 0.05, 1.0, 1.2)
    beta = beta_schedule(0.05, 1.0)

    def c_half(d):
        x = ops.displacement_operator(spec, d.dim // 2)
        el = d.transform(x)
        return corr_from_elements(d, el * el, beta, beta / 2)

    value, report = spectra.converge_truncation(
        lambda n: ops.build_hamiltonian(spec, n), c_half, tol=1e-6, n0=16)
    again = c_half(spectra.eigh(ops.build_hamiltonian(spec, 2 * report.n_fock_final)))
    assert abs(again - value) <= 1e-6 * abs(value)


def test_non_convergence_reports_cap():
    spec = ops.HamiltonianSpec("rabi", 0.0125, 1.0, 1.2)
    with pytest.raises(spectra.NonConvergenceError) as info:
        spectra.converge_truncation(lambda n: ops.build_hamiltonian(spec, n), spectra.gap,
                                    tol=1e-12, n0=8, max_fock=32)
    rep = info.value.report
    assert not rep.converged and rep.n_fock_final == 32
    assert np.isfinite(info.value.value)


@pytest.mark.parametrize("kwargs", [{"tol": 0.0}, {"n0": 2}])
def test_converge_truncation_rejects_bad_arguments(kwargs):
    spec = ops.HamiltonianSpec("rabi", 1.0, 1.0, 0.0)
    args = {"tol": 1e-6, "n0": 16, **kwargs}
    with pytest.raises(ValueError):
        spectra.converge_truncation(lambda n: ops.build_hamiltonian(spec, n), spectra.gap, **args)


def test_reports_are_deterministic():
    spec = ops.HamiltonianSpec("rabi", 0.1, 1.0, 0.9)
    run = lambda: spectra.converge_truncation(  # noqa: E731
        lambda n: ops.build_hamiltonian(spec, n), spectra.gap, tol=1e-8, n0=16)
    assert run() == run()


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 2.0), st.floats(0.0, 2.0))
def test_gap_is_non_negative(omega, lam):
    d = spectra.eigh(ops.build_hamiltonian(ops.HamiltonianSpec("rabi", omega, 1.0, lam), 32))
    assert spectra.gap(d) >= -1e-12
    assert np.all(np.diff(d.energies) >= 0)
