import numpy as np
import pytest
from scipy.stats import chisquare

from helpers import random_params
from smoothnqs.errors import ConfigError
from smoothnqs.exact_engine import densify_rbm, sigma_x_expectation
from smoothnqs.rbm import RbmParams
from smoothnqs.sampler import ChainConfig, SampleSet, derive_seed, estimate_observable, sample, sigma_x_estimator


def test_uniform_target_has_zero_magnetization():
    s = sample(RbmParams.zeros(6, 1), ChainConfig(1000, 100, 20, 2, seed=4))
    mean, err = estimate_observable(s, RbmParams.zeros(6, 1), lambda p, x: x[:, 0])
    assert abs(mean) <= 4 * err


@pytest.mark.slow
def test_chi_square_against_born_distribution():
    p = random_params(6, 2, scale=0.3, seed=12)
    prob = np.abs(densify_rbm(p)) ** 2
    prob /= prob.sum()
    s = sample(p, ChainConfig(4000, 250, 50, 4, seed=7))
    counts = np.bincount(s.flat_codes, minlength=64)
    assert counts.sum() == 10 ** 6
    assert chisquare(counts, prob * counts.sum()).pvalue > 1e-3


def test_seeded_sampling_is_bit_identical():
    p = random_params(5, 1, seed=1)
    cfg = ChainConfig(8, 50, 10, 2, seed=99)
    a, b = sample(p, cfg), sample(p, cfg)
    np.testing.assert_array_equal(a.codes, b.codes)
    assert a.lineage == b.lineage
    assert not np.array_equal(a.codes, sample(p, cfg.reseeded(100)).codes)


def test_constant_estimator_has_zero_error():
    s = sample(random_params(4, 1, seed=2), ChainConfig(8, 32, 10, 1))
    mean, err = estimate_observable(s, None, lambda p, x: np.full(x.shape[0], 2.5))
    assert (mean, err) == (2.5, 0.0)


def test_sigma_x_on_zero_params_is_exactly_one():
    p = RbmParams.zeros(5, 2)
    s = sample(p, ChainConfig(4, 32, 10, 1))
    assert estimate_observable(s, p, sigma_x_estimator(3)) == (1.0, 0.0)


@pytest.mark.slow
def test_sigma_x_estimates_cover_exact_value():
    p = random_params(8, 1, scale=0.3, seed=5)
    exact = sigma_x_expectation(densify_rbm(p), 4)
    hits = 0
    for seed in range(100):
        mean, err = estimate_observable(sample(p, ChainConfig(64, 64, 100, 2, seed=seed)), p, sigma_x_estimator(4))
        hits += abs(mean.real - exact) <= 3 * err
    assert hits >= 99


def test_full_basis_weights():
    s = SampleSet.full_basis([1.0, 3.0, 0.0, 4.0], 2)
    np.testing.assert_allclose(s.normalized_weights(), [0.125, 0.375, 0.0, 0.5])
    mean, err = estimate_observable(s, None, lambda p, x: x[:, 0])
    assert mean == pytest.approx(-0.125 + 0.375 + 0.5) and err == 0.0  # site 1 is the low bit


def test_seed_derivation_and_validation():
    assert derive_seed(1, 2, 3) == derive_seed(1, 2, 3) != derive_seed(1, 2, 4)
    with pytest.raises(ConfigError):
        ChainConfig(n_chains=0)
