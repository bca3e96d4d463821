from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from critlab import operators as ops
from critlab import scaling


def test_exact_quadratic_fit():
    fit = scaling.loglog_fit([(1, 1), (2, 4), (4, 16)])
    assert fit.slope == pytest.approx(2.0, abs=1e-12)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
    assert fit.n_points == 3


def test_constant_fit():
    fit = scaling.loglog_fit([(1, 3.0), (2, 3.0), (4, 3.0)])
    assert fit.slope == pytest.approx(0.0, abs=1e-12)
    assert fit.r_squared == 1.0


def test_noisy_synthetic_power_law():
    rng = np.random.default_rng(7)
    x = np.geomspace(1, 100, 12)
    y = x ** 1.5 * (1 + rng.uniform(-1e-3, 1e-3, x.size))
    assert scaling.loglog_fit(list(zip(x, y))).slope == pytest.approx(1.5, abs=0.01)


@pytest.mark.parametrize("points", [[(1, 1), (2, 2)], [(1, 1), (2, -2), (3, 3)],
                                    [(0, 1), (2, 2), (3, 3)]])
def test_fit_rejects_bad_input(points):
    with pytest.raises(ValueError):
        scaling.loglog_fit(points)


def test_classify_power_law():
    fit = scaling.loglog_fit([(x, x ** 0.8) for x in (1, 2, 4, 8, 16)])
    cls = scaling.classify(fit)
    assert cls.is_power_law
    assert cls.delta == pytest.approx(0.4, abs=1e-12)


def test_classify_exponential_is_nsi():
    fit = scaling.loglog_fit([(x, math.exp(-x)) for x in range(1, 7)])
    assert scaling.classify(fit).kind is scaling.ScaleKind.NSI
    assert scaling.classify(fit).label() == "NSI"


def test_classify_uses_supplied_thresholds():
    fit = scaling.loglog_fit([(x, math.exp(-x)) for x in range(1, 7)])
    assert scaling.classify(fit, r2_min=0.0, resid_max=10.0).is_power_law


@pytest.mark.parametrize("lam, phase", [(0.8, "normal"), (1.0, "critical"),
                                        (1.2, "superradiant"), (1.0 + 1e-13, "critical")])
def test_phase_classifier(lam, phase):
    assert scaling.phase_classifier(lam).value == phase


def test_predicted_cells():
    assert scaling.predict_table1("below", 0.75).predicted_delta == pytest.approx(1 / 0.75 - 0.5)
    assert scaling.predict_table1("critical", 1.5).predicted_delta == pytest.approx(0.4166666, abs=1e-6)
    assert scaling.predict_table1("below", 1.25).is_nsi
    assert scaling.predict_table1("below", 1.0).predicted_delta == pytest.approx(0.5)
    assert scaling.predict_table1("critical", 1.6).is_nsi
    assert scaling.predict_table1("above", 3.0).predicted_delta == pytest.approx(1 / 3)


@settings(max_examples=200)
@given(st.sampled_from(list(scaling.Regime)), st.floats(1e-3, 10.0))
def test_prediction_table_is_total(regime, z_prime):
    pred = scaling.predict_table1(regime, z_prime)
    if not pred.is_nsi:
        assert pred.predicted_delta > 0


def test_trim_direction():
    pts = [(float(i), float(i)) for i in range(1, 6)]
    assert scaling.trim_leading(pts)[0][0] == 2.0
    assert scaling.trim_leading(pts, drop_largest_x=True)[0][0] == 4.0
    assert len(scaling.trim_leading(pts[:4])) == 4


@settings(max_examples=50)
@given(st.floats(-3, 3), st.floats(1e-3, 1e3), st.floats(1e-3, 1e3))
def test_fit_scale_covariance(slope, cx, cy):
    x = np.array([1.0, 2.0, 3.5, 7.0, 11.0])
    y = x ** slope * (1 + 0.05 * np.sin(x))
    base = scaling.loglog_fit(list(zip(x, y)))
    moved = scaling.loglog_fit(list(zip(cx * x, cy * y)))
    assert moved.slope == pytest.approx(base.slope, abs=1e-9)


@settings(max_examples=50)
@given(st.floats(-2, 2), st.integers(1, 5))
def test_classifier_monotone_under_extension(slope, extra):
    xs = [1.0, 2.0, 4.0, 8.0]
    pts = [(x, x ** slope) for x in xs]
    assert scaling.classify(scaling.loglog_fit(pts)).is_power_law
    more = pts + [(16.0 * 2 ** i, (16.0 * 2 ** i) ** slope) for i in range(extra)]
    assert scaling.classify(scaling.loglog_fit(more)).is_power_law


def test_decoupled_gap_slope_is_one():
    spec = ops.HamiltonianSpec("rabi", 1.0, 1.0, 0.0)
    scan = scaling.gap_scan(spec, "omega", [0.2, 0.1, 0.05, 0.025, 0.0125], at_critical=False)
    assert scan.fit.slope == pytest.approx(1.0, abs=1e-6)


def test_gap_scan_needs_four_points():
    spec = ops.HamiltonianSpec("rabi", 1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        scaling.gap_scan(spec, "omega", [0.2, 0.1, 0.05])
    with pytest.raises(ValueError):
        scaling.gap_scan(spec, "n_atoms", [4, 8, 16, 32])


def test_gap_exponent_reports_unfittable_scan():
    spec = ops.HamiltonianSpec("rabi", 1.0, 1.0, 1.0)
    from critlab.spectra import NonConvergenceError
    with pytest.raises(NonConvergenceError):
        scaling.gap_exponent(spec, "omega", [0.2, 0.05, 0.02, 0.0125], tol=1e-12, max_fock=32)


def test_critical_rabi_gap_exponent():
    spec = ops.HamiltonianSpec("rabi", 1.0, 1.0, 1.0)
    fit = scaling.gap_exponent(spec, "omega", [0.2, 0.1, 0.05, 0.025, 0.0125])
    assert fit.slope == pytest.approx(4 / 3, abs=0.05)
