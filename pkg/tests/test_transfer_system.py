import math

import numpy as np
import pytest
from scipy.stats import binom

from core.environment import Bernoulli, Gaussian, LatticeEnvironment, derive_seed, sample_environment
from core.errors import EnumerationLimitError, EnvironmentBoundsError, PathError
from core.transfer_system import (brute_force_endpoint, brute_force_max, brute_force_partition,
                                  endpoint_distribution, expected_path_weight, log_partition_sequence,
                                  max_path_weight, min_path_weight, partition_log, path_weight,
                                  transfer_slices, walk_distribution)


def test_partition_at_zero_beta_is_exactly_zero(bernoulli_env):
    assert partition_log(bernoulli_env, 15, 0.0).log_z == 0.0
    np.testing.assert_array_equal(log_partition_sequence(bernoulli_env, 10, 0.0), np.zeros(11))


def test_two_path_partition(two_path_env):
    assert partition_log(two_path_env, 1, 1.0).log_z == pytest.approx(math.log((1 + math.e) / 2))


def test_slices_normalized_and_parity_respecting(bernoulli_env):
    for s in transfer_slices(bernoulli_env, 6, 0.0):
        assert np.exp(s.log_values).sum() == pytest.approx(1.0, rel=1e-10)
        odd = np.arange(-s.step, s.step + 1) % 2 != s.step % 2
        assert np.all(np.isneginf(s.log_values[odd]))


@pytest.mark.parametrize("d,n", [(1, 2), (1, 8), (2, 5)])
def test_partition_matches_brute_force(d, n):
    for r in range(5):
        env = sample_environment(Bernoulli(0.5), d, n, derive_seed(17, r))
        for beta in (-1.3, 0.4, 2.0):
            assert partition_log(env, n, beta).log_z == pytest.approx(
                brute_force_partition(env, n, beta), abs=1e-10)


def test_brute_force_trivial_cases():
    ones = LatticeEnvironment.constant(1, 3, 1.0)
    assert brute_force_partition(ones, 0, 1.0) == 0.0
    assert brute_force_partition(ones, 3, 1.0) == pytest.approx(3.0)
    with pytest.raises(EnumerationLimitError):
        brute_force_partition(LatticeEnvironment.constant(2, 20, 0.0), 20, 1.0)


def test_path_weight():
    env = LatticeEnvironment.from_function(1, 3, lambda k, site: 10.0 * k + site[0])
    assert path_weight(env, [0]) == 0.0
    assert path_weight(env, [0, 1, 2]) == 11.0 + 22.0
    path = [0, 1, 0, -1]
    forward = path_weight(env, path)
    backward = sum(env.weight(k, path[k]) for k in reversed(range(1, 4)))
    assert forward == backward
    with pytest.raises(PathError):
        path_weight(env, [0, 2])
    with pytest.raises(PathError):
        path_weight(env, [0, 1, 0, 1, 0])


def test_max_path_weight():
    assert max_path_weight(LatticeEnvironment.constant(2, 5, 0.7), 5) == pytest.approx(3.5)
    env = sample_environment(Gaussian(0.0, 1.0), 1, 4, seed=8)
    assert max_path_weight(env, 4) == brute_force_max(env, 4)
    assert min_path_weight(env, 4) == -brute_force_max(env.negated(), 4)


def test_max_weight_bounds_partition():
    for r in range(10):
        env = sample_environment(Bernoulli(0.5), 1, 12, derive_seed(3, r))
        for beta in (0.5, 1.0, 4.0):
            assert max_path_weight(env, 12) >= partition_log(env, 12, beta).log_z / beta - 1e-12


def test_endpoint_distribution(bernoulli_env):
    walk = endpoint_distribution(bernoulli_env, 6, 0.0)
    expected = binom.pmf(np.arange(7), 6, 0.5)
    for j, x in enumerate(range(-6, 7, 2)):
        assert walk.prob(x) == pytest.approx(expected[j], abs=1e-14)
    tilted = endpoint_distribution(bernoulli_env, 3, 1.3)
    assert tilted.total() == pytest.approx(1.0, abs=1e-10)
    assert tilted.total_variation(brute_force_endpoint(bernoulli_env, 3, 1.3)) < 1e-10


def test_walk_distribution_matches_zero_beta(bernoulli_env):
    assert walk_distribution(1, 9).total_variation(endpoint_distribution(bernoulli_env, 9, 0.0)) < 1e-12


def test_log_partition_convex_in_beta(bernoulli_env):
    betas = np.linspace(-3.0, 3.0, 61)
    values = np.array([partition_log(bernoulli_env, 15, b).log_z for b in betas])
    assert np.all(values[:-2] - 2 * values[1:-1] + values[2:] >= -1e-8)


def test_slope_at_zero_is_expected_weight():
    env = sample_environment(Gaussian(0.3, 1.0), 2, 10, seed=21)
    h = 1e-5
    slope = (partition_log(env, 10, h).log_z - partition_log(env, 10, -h).log_z) / (2 * h)
    assert slope == pytest.approx(expected_path_weight(env, 10), abs=1e-6)


def test_monotone_in_environment():
    env = sample_environment(Gaussian(0.0, 1.0), 1, 10, seed=5)
    bigger = env.map_weights(lambda w: w + np.abs(w) * 0.5, "bigger")
    for beta in (0.0, 0.5, 2.0):
        assert partition_log(env, 10, beta).log_z <= partition_log(bigger, 10, beta).log_z + 1e-12


def test_horizon_enforced(bernoulli_env):
    with pytest.raises(EnvironmentBoundsError):
        partition_log(bernoulli_env, 21, 1.0)
    with pytest.raises(EnvironmentBoundsError):
        max_path_weight(bernoulli_env, 21)


def test_view_partition_matches_shifted_brute_force():
    env = sample_environment(Bernoulli(0.5), 1, 10, seed=2, margin=2)
    view = env.translate(3, 2)
    assert partition_log(view, 5, 0.8).log_z == pytest.approx(brute_force_partition(view, 5, 0.8), abs=1e-10)


@pytest.mark.slow
@pytest.mark.parametrize("d", [1, 2])
@pytest.mark.parametrize("n", range(1, 9))
def test_partition_matches_brute_force_acceptance(d, n):
    for r in range(25):
        env = sample_environment(Gaussian(0.0, 1.0), d, n, derive_seed(41, r))
        for beta in (-2.0, -0.5, 1.0, 3.0):
            assert partition_log(env, n, beta).log_z == pytest.approx(
                brute_force_partition(env, n, beta), abs=1e-10)
