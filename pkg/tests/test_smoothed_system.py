import math

import numpy as np
import pytest
from scipy.special import logsumexp

from core.conjugate_system import rate_from_curve
from core.count_system import count_table
from core.environment import (Bernoulli, FiniteDiscrete, Gaussian, LatticeEnvironment, derive_seed,
                              sample_environment)
from core.errors import ModelError
from core.free_energy_manager import curve_environments, estimate_free_energy
from core.smoothed_system import (concentration_experiment, lambda_monotonicity_check, point_table,
                                  rate_lambda_estimate, sandwich_bounds, sigma_measure,
                                  smoothed_value, smoothed_value_env, superadditivity_check_mean,
                                  superadditivity_check_pathwise, two_route_check, two_route_rate)
from core.transfer_system import enumerate_path_weights

SIGNED = FiniteDiscrete([-1.0, 0.0, 2.0], [0.3, 0.3, 0.4])


def brute_smoothed(env, n, lam, a):
    paths = enumerate_path_weights(env, n)
    return float(logsumexp(-lam * np.abs(paths.weights - a)) - n * math.log(2 * env.d))


def brute_sigma(env, n, lam, b):
    paths = enumerate_path_weights(env, n)
    tilt = np.exp(-lam * np.abs(paths.weights - b))
    out = {}
    for end, w in zip(map(tuple, paths.endpoints.tolist()), tilt.tolist()):
        out[end] = out.get(end, 0.0) + w
    total = sum(out.values())
    return {site: w / total for site, w in out.items()}


def test_zero_environment_value():
    env = LatticeEnvironment.constant(2, 5, 0.0)
    assert smoothed_value_env(env, 5, 1.5, 0.0).value == pytest.approx(0.0, abs=1e-12)
    assert smoothed_value_env(env, 5, 1.5, -2.0).value == pytest.approx(-3.0)


def test_two_path_value(two_path_env):
    result = smoothed_value(point_table(two_path_env, 1), 1.0, 0.5)
    assert result.value == pytest.approx(-0.5)
    assert result.error_bound == 0.0
    sigma = sigma_measure(two_path_env, 1, 1.0, 1.0)
    assert sigma.prob(1) == pytest.approx(1.0 / (1.0 + math.exp(-1.0)))
    assert sigma.prob(-1) == pytest.approx(math.exp(-1.0) / (1.0 + math.exp(-1.0)))
    assert sigma.log_normalizer == pytest.approx(math.log((1.0 + math.exp(-1.0)) / 2.0))


@pytest.mark.parametrize("d,n", [(1, 6), (1, 8), (2, 4)])
def test_matches_brute_force(d, n):
    for r in range(5):
        env = sample_environment(SIGNED, d, n, derive_seed(21, r))
        for lam, a in ((0.5, 0.0), (1.0, 2.5), (5.0, -1.0)):
            assert smoothed_value_env(env, n, lam, a).value == pytest.approx(
                brute_smoothed(env, n, lam, a), abs=1e-10)
        sigma = sigma_measure(env, n, 2.0, 1.0)
        assert sigma.total() == pytest.approx(1.0, abs=1e-12)
        for site, p in brute_sigma(env, n, 2.0, 1.0).items():
            assert sigma.prob(site) == pytest.approx(p, abs=1e-10)


def test_sigma_normalizer_is_smoothed_value(bernoulli_env):
    table = point_table(bernoulli_env, 10)
    sigma = sigma_measure(bernoulli_env, 10, 4.0, 2.0)
    assert sigma.log_normalizer == pytest.approx(smoothed_value(table, 2.0, 4.0).value, abs=1e-12)


def test_started_elsewhere_matches_translated_brute_force():
    env = sample_environment(SIGNED, 1, 8, seed=3, margin=2)
    shifted = env.translate(0, (2,))
    assert smoothed_value_env(env, 6, 1.0, 1.0, x=(2,)).value == pytest.approx(
        brute_smoothed(shifted, 6, 1.0, 1.0), abs=1e-10)


def test_quantized_value_within_error_bound():
    env = sample_environment(Gaussian(0.0, 1.0), 1, 6, seed=8)
    result = smoothed_value_env(env, 6, 2.0, 0.3, step=0.01)
    assert result.error_bound == pytest.approx(0.06)
    assert abs(result.value - brute_smoothed(env, 6, 2.0, 0.3)) <= result.error_bound + 1e-12


def test_sign_and_lipschitz(bernoulli_env):
    rng = np.random.default_rng(6)
    table = point_table(bernoulli_env, 12)
    for _ in range(1000):
        lam = float(rng.choice([0.5, 1.0, 5.0]))
        a, b = rng.uniform(-5.0, 20.0, size=2)
        va = smoothed_value(table, lam, a).value
        vb = smoothed_value(table, lam, b).value
        assert va <= 0.0 and vb <= 0.0
        assert abs(va - vb) <= lam * abs(a - b) + 1e-10


def test_invalid_lambda(bernoulli_env):
    with pytest.raises(ModelError):
        smoothed_value(point_table(bernoulli_env, 3), 0.0, 1.0)


def test_pathwise_superadditivity_random_cases():
    rng = np.random.default_rng(11)
    for case in range(100):
        n, m = (int(v) for v in rng.integers(0, 11, size=2))
        d = 1 if case % 4 else 2
        if d == 2:
            n, m = min(n, 4), min(m, 4)
        env = sample_environment(SIGNED, d, max(n + m, 1), derive_seed(13, case))
        a, b = (float(v) for v in rng.uniform(-3.0, 8.0, size=2))
        lam = float(rng.choice([0.5, 1.0, 5.0]))
        report = superadditivity_check_pathwise(env, n, m, a, b, lam)
        assert report.passed, report.to_dict()
        assert report.details["gluing_slack"] >= -1e-9
        assert report.details["gluing_bound"] >= report.rhs - 1e-9


def test_pathwise_superadditivity_rejects_short_window(bernoulli_env):
    with pytest.raises(ModelError):
        superadditivity_check_pathwise(bernoulli_env, 15, 10, 0.0, 0.0, 1.0)


def test_mean_superadditivity():
    report = superadditivity_check_mean(Bernoulli(0.5), 1, 6, 6, 3.0, 3.0, 1.0, replicas=20, seed=2)
    assert report.passed
    assert report.details["M"] == 20
    degenerate = superadditivity_check_mean(Bernoulli(0.5), 1, 6, 0, 3.0, 0.5, 1.0, replicas=5, seed=2)
    assert degenerate.passed
    with pytest.raises(ModelError):
        superadditivity_check_mean(Bernoulli(0.5), 1, 6, 6, 3.0, 3.0, 1.0, replicas=1, seed=2)


def test_sandwich_random_cases():
    rng = np.random.default_rng(5)
    for case in range(100):
        n = int(rng.integers(1, 31))
        env = sample_environment(SIGNED, 1, n, derive_seed(17, case))
        table = count_table(env, n)
        xi = float(rng.uniform(-1.0, 2.0))
        delta = float(rng.choice([0.05, 0.1, 0.2]))
        lam = float(rng.choice([1.0, 5.0, 20.0]))
        report = sandwich_bounds(table, xi, delta, lam)
        assert report.passed, [c.to_dict() for c in report.checks()]
        assert report.log_open <= report.log_closed


def test_sandwich_degenerate_environment():
    table = count_table(LatticeEnvironment.constant(1, 10, 0.0), 10)
    report = sandwich_bounds(table, 0.0, 0.1, 5.0)
    assert report.log_closed == pytest.approx(0.0, abs=1e-12)
    assert report.log_expectation == pytest.approx(0.0, abs=1e-12)
    assert report.passed
    far = sandwich_bounds(table, 1.0, 0.1, 5.0)
    assert far.log_closed == -math.inf and far.passed
    with pytest.raises(ModelError):
        sandwich_bounds(table, 0.0, 0.0, 5.0)


def test_lambda_rate_estimate_and_monotonicity():
    reports = [rate_lambda_estimate(Bernoulli(0.5), 1, 0.75, lam, [8, 16], replicas=10, seed=4)
               for lam in (0.5, 1.0, 2.0)]
    for report in reports:
        assert [row.n for row in report.rows] == [8, 16]
        assert all(r.passed for r in report.jensen_check())
        assert report.trend_check().passed
        assert report.samples.shape == (10, 2)
        assert report.to_dict()["M"] == 10
    checks = lambda_monotonicity_check(reports[::-1])
    assert len(checks) == 2
    assert all(c.passed for c in checks)
    estimates = [r.estimate[0] for r in reports]
    assert estimates == sorted(estimates)


def test_concentration_experiment():
    report = concentration_experiment(Bernoulli(0.5), 1, 16, 8.0, 1.0, replicas=200, seed=3)
    assert len(report.rows) == 4
    assert all(c.passed for c in report.checks())
    assert report.csv_rows()[0][0] == 1.0
    first = report.rows[0]
    assert first.derived_bound == pytest.approx(2.0 * math.exp(-1.0 / 32.0))
    assert first.displayed_bound == pytest.approx(2.0 * math.exp(-1.0 / 32.0))
    with pytest.raises(ModelError):
        concentration_experiment(Bernoulli(0.5), 1, 16, 8.0, 1.0, replicas=50, seed=3)


def test_two_route_rate_on_constant_environment():
    envs = [LatticeEnvironment.constant(1, 20, 1.0)] * 3
    estimate = two_route_rate(envs, 20, 1.0, 0.05, 10.0)
    assert estimate.mean == pytest.approx(-10.0 * 0.05)
    assert estimate.se == 0.0
    assert two_route_check(estimate, 0.0, tolerance=0.6).passed


@pytest.mark.slow
def test_lambda_monotonicity_acceptance():
    for xi in (0.6, 0.75):
        reports = [rate_lambda_estimate(Bernoulli(0.5), 1, xi, lam, [32], replicas=100, seed=29)
                   for lam in (0.5, 1.0, 2.0, 4.0)]
        assert all(c.passed for c in lambda_monotonicity_check(reports))


@pytest.mark.slow
def test_concentration_acceptance():
    report = concentration_experiment(Bernoulli(0.5), 1, 16, 8.0, 1.0, replicas=1000, seed=31)
    assert all(c.passed for c in report.checks())


@pytest.mark.slow
def test_two_route_consistency():
    curve = estimate_free_energy(Bernoulli(0.5), 1, np.arange(-6.0, 6.0001, 0.25), [40], 50, seed=37)
    rate_value, _ = rate_from_curve(curve).evaluate(0.75)
    estimate = two_route_rate(curve_environments(curve), 40, 0.75, 0.0025, 20.0)
    assert two_route_check(estimate, rate_value).passed


@pytest.mark.slow
@pytest.mark.parametrize("d", [1, 2])
@pytest.mark.parametrize("n", range(1, 9))
def test_matches_brute_force_acceptance(d, n):
    for r in range(25):
        env = sample_environment(SIGNED, d, n, derive_seed(43, r))
        table = point_table(env, n)
        for lam, a in ((0.5, 0.0), (2.0, 0.4 * n)):
            assert smoothed_value(table, lam, a).value == pytest.approx(brute_smoothed(env, n, lam, a), abs=1e-10)
        sigma = sigma_measure(env, n, 2.0, 0.4 * n)
        assert sigma.total() == pytest.approx(1.0, abs=1e-10)
        for site, p in brute_sigma(env, n, 2.0, 0.4 * n).items():
            assert sigma.prob(site) == pytest.approx(p, abs=1e-10)
