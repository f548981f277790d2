import math

import numpy as np
import pytest

from core.conjugate_system import (annealed_order_check, biconjugate, convex_minorant, corollary_check,
                                   legendre, rate_from_curve, rho_pm, rho_pm_bound_check,
                                   rho_pm_consistency, v_set_scan)
from core.environment import Bernoulli, FiniteDiscrete, Gaussian
from core.errors import ModelError
from core.free_energy_manager import estimate_free_energy


def analytic_rate(model, betas, rho_grid=None):
    values = [model.log_mgf(b) for b in betas]
    return legendre(betas, values, rho_grid=rho_grid, source={"d": 1})


def test_quadratic_conjugate():
    betas = np.linspace(-4.0, 4.0, 801)
    rate = legendre(betas, betas ** 2 / 2.0, rho_grid=[1.0])
    assert rate.values[0] == pytest.approx(0.5, abs=1e-6)
    assert rate.argmax_betas[0] == pytest.approx(1.0, abs=1e-9)
    assert rate.evaluate(2.0)[0] == pytest.approx(2.0, abs=1e-6)


@pytest.mark.parametrize("model,lo,hi", [
    (Bernoulli(0.5), -20.0, 20.0),
    (Gaussian(0.0, 1.0), -6.0, 6.0),
    (Gaussian(1.0, 2.0), -5.0, 5.0),
])
def test_round_trip_against_closed_form(model, lo, hi):
    betas = np.linspace(lo, hi, int(round((hi - lo) / 0.01)) + 1)
    rate = analytic_rate(model, betas)
    low, high = rate.validity
    inner = np.linspace(low + 0.1 * (high - low), high - 0.1 * (high - low), 41)
    for rho in inner.tolist():
        assert rate.evaluate(rho)[0] == pytest.approx(model.conjugate(rho), abs=1e-3)
    mean = model.mean()
    assert abs(rate.evaluate(mean)[0]) <= 1e-6


def test_rate_is_monotone_around_minimizer():
    rate = analytic_rate(Bernoulli(0.5), np.linspace(-10.0, 10.0, 2001), np.linspace(0.05, 0.95, 19))
    i = int(np.argmin(rate.values))
    assert rate.rhos[i] == pytest.approx(0.5)
    assert np.all(np.diff(rate.values[:i + 1]) <= 1e-15)
    assert np.all(np.diff(rate.values[i:]) >= -1e-15)
    assert not rate.flags.any()
    assert rate.minimum()[0] == pytest.approx(0.5)


def test_extrapolation_flag():
    rate = analytic_rate(Gaussian(0.0, 1.0), np.linspace(-1.0, 1.0, 21), [-3.0, 0.0, 3.0])
    assert rate.flags.tolist() == [True, False, True]
    rows = rate.rows()
    assert rows[1][0] == 0.0 and rows[1][2] is False


def test_biconjugate_of_convex_input():
    betas = np.linspace(-3.0, 3.0, 61)
    values = np.array([Bernoulli(0.5).log_mgf(b) for b in betas])
    rate = legendre(betas, values)
    np.testing.assert_allclose(biconjugate(rate), values, atol=1e-9)


def test_biconjugate_of_nonconvex_input_is_minorant():
    rate = legendre([-1.0, 0.0, 1.0], [0.0, 1.0, 0.0], rho_grid=np.linspace(-2.0, 2.0, 401))
    np.testing.assert_allclose(biconjugate(rate), [0.0, 0.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(convex_minorant([-1.0, 0.0, 1.0], [0.0, 1.0, 0.0]), [0.0, 0.0, 0.0])
    np.testing.assert_allclose(convex_minorant([0.0, 1.0, 2.0, 3.0], [0.0, 1.0, 4.0, 9.0]), [0, 1, 4, 9])


@pytest.mark.parametrize("betas,values", [
    ([1.0], [0.0]),
    ([0.0, 0.0], [0.0, 1.0]),
    ([1.0, 0.0], [0.0, 1.0]),
    ([0.0, 1.0], [0.0, math.nan]),
    ([0.0, 1.0], [0.0]),
])
def test_legendre_rejects_bad_input(betas, values):
    with pytest.raises(ModelError):
        legendre(betas, values)


def test_v_set_and_order_with_annealed_curve():
    model = Bernoulli(0.5)
    betas = np.linspace(-10.0, 10.0, 2001)
    rate = analytic_rate(model, betas, [0.1, 0.3, 0.5, 0.7, 0.9, 1.5])
    flagged = v_set_scan(rate, model, tolerance=1e-3)
    assert flagged == [0.1, 0.3, 0.5, 0.7, 0.9]
    lowered = legendre(betas, [model.log_mgf(b) - 0.05 * b * b for b in betas],
                       rho_grid=[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.5])
    reports = annealed_order_check(lowered, model)
    assert len(reports) == 9
    assert all(r.passed for r in reports)
    assert v_set_scan(lowered, model, rho_grid=[0.9]) == []


def test_rho_pm_constant_model():
    curve = estimate_free_energy(FiniteDiscrete([1.0], [1.0]), 1, [-2.0, -1.0, 1.0, 2.0], [4], 2, seed=0)
    estimate = rho_pm(curve)
    assert estimate.plus_curve == pytest.approx(1.0)
    assert estimate.minus_curve == pytest.approx(-1.0)
    assert estimate.plus_direct == pytest.approx(1.0)
    assert estimate.minus_direct == pytest.approx(-1.0)
    assert not estimate.diverging
    assert all(r.passed for r in rho_pm_bound_check(curve, estimate))
    assert all(r.passed for r in rho_pm_consistency(rate_from_curve(curve), estimate))
    assert estimate.to_dict()["n"] == 4


def test_rho_pm_requires_both_signs_and_flags_unbounded():
    curve = estimate_free_energy(Bernoulli(0.5), 1, [0.5, 1.0], [4], 2, seed=0)
    with pytest.raises(ModelError):
        rho_pm(curve)
    gaussian = estimate_free_energy(Gaussian(0.0, 1.0), 1, [-4.0, 0.0, 4.0], [8], 4, seed=0)
    estimate = rho_pm(gaussian)
    assert estimate.diverging
    assert all(r.passed for r in rho_pm_bound_check(gaussian, estimate))


def test_rho_pm_bernoulli_bounds():
    curve = estimate_free_energy(Bernoulli(0.5), 1, np.linspace(-8.0, 8.0, 17), [16], 10, seed=4)
    estimate = rho_pm(curve)
    assert 0.5 < estimate.plus_direct <= 1.0
    assert -0.5 < estimate.minus_direct <= 0.0
    assert all(r.passed for r in rho_pm_bound_check(curve, estimate))
    assert all(r.passed for r in rho_pm_consistency(rate_from_curve(curve), estimate))


def test_corollary_constant_model():
    model = FiniteDiscrete([1.0], [1.0])
    rate = analytic_rate(model, [-1.0, 0.0, 1.0])
    report = corollary_check(model, 1, 1.0, [4, 8], rate, replicas=2, seed=0)
    assert report.target == pytest.approx(math.log(2.0))
    assert all(diff == pytest.approx(0.0, abs=1e-12) for diff in report.differences())
    assert report.trend_check().passed
    empty = corollary_check(model, 1, 1.5, [4, 8], rate, replicas=2, seed=0)
    assert [row.zero_count for row in empty.rows] == [2, 2]
    assert all(math.isnan(row.mean) for row in empty.rows)
    assert empty.to_dict()["sequence"][0]["mean"] is None
    assert empty.trend_check().passed
    assert report.window == (1.0, 1.0) and not report.in_window


def test_corollary_reports_level_window(caplog):
    model = Bernoulli(0.5)
    rate = analytic_rate(model, np.linspace(-3.0, 3.0, 25))
    inside = corollary_check(model, 1, 0.5, [4, 8], rate, replicas=3, seed=4)
    lo, hi = inside.window
    assert 0.0 <= lo < 0.5 < hi <= 1.0
    assert inside.in_window and inside.to_dict()["in_window"] is True
    with caplog.at_level("WARNING", logger="core.conjugate_system"):
        outside = corollary_check(model, 1, 1.5, [4, 8], rate, replicas=3, seed=4)
    assert outside.window == inside.window
    assert not outside.in_window
    assert outside.trend_check().details["in_window"] is False
    assert any("窗口" in r.getMessage() for r in caplog.records)


def test_corollary_rejects_real_valued_model():
    rate = analytic_rate(Gaussian(0.0, 1.0), [-1.0, 0.0, 1.0])
    with pytest.raises(ModelError):
        corollary_check(Gaussian(0.0, 1.0), 1, 0.5, [4], rate, replicas=2, seed=0)


@pytest.mark.slow
def test_corollary_trend_bernoulli():
    model = Bernoulli(0.5)
    curve = estimate_free_energy(model, 1, np.arange(-3.0, 3.0001, 0.25), [64], 50, seed=17)
    rate = rate_from_curve(curve)
    report = corollary_check(model, 1, 0.75, [16, 32, 64], rate, replicas=50, seed=17)
    assert report.trend_check().passed
    assert report.rows[-1].difference < 0.1
