import math

import numpy as np
import pytest
from scipy import stats

from qgnoise.noise import (
    NoiseProfile,
    NoiseSettings,
    apply_output_noise,
    gaussian,
    noise_sigma,
    p_error,
    theoretical_optimal_epsilon,
)

# 1 - 0.995**100 evaluated at 40-digit precision
P_ERROR_REFERENCE = 0.39422956350927178
ATTENUATION_REFERENCE = 0.60577043649072822
SIGMA_REFERENCE = 0.07884591270185436


class TestPError:
    def test_zero_epsilon(self):
        assert p_error(NoiseProfile(0.0, 100, 1)) == 0.0

    def test_reference_value(self):
        assert p_error(NoiseProfile(0.005, 100, 1)) == pytest.approx(P_ERROR_REFERENCE, abs=1e-9)

    def test_exponent_product_symmetry(self):
        assert p_error(NoiseProfile(0.015, 50, 2)) == p_error(NoiseProfile(0.015, 100, 1))

    def test_monotonicity(self):
        base = p_error(NoiseProfile(0.005, 100, 1))
        assert p_error(NoiseProfile(0.006, 100, 1)) > base
        assert p_error(NoiseProfile(0.005, 101, 1)) > base
        assert p_error(NoiseProfile(0.005, 100, 2)) > base

    def test_range(self):
        for eps in (0.001, 0.01, 0.1, 0.9):
            for ng in (1, 10, 1000):
                assert 0.0 <= p_error(NoiseProfile(eps, ng, 1)) < 1.0

    def test_profile_validation(self):
        with pytest.raises(ValueError):
            NoiseProfile(1.0, 100, 1)
        with pytest.raises(ValueError):
            NoiseProfile(0.1, 0, 1)
        with pytest.raises(ValueError):
            NoiseProfile(0.1, 10, 0)
        with pytest.raises(ValueError):
            NoiseProfile(0.1, 10, 1, sigma_coeff=-0.1)

    def test_settings_validation(self):
        with pytest.raises(ValueError):
            NoiseSettings(epsilon=-0.1)
        with pytest.raises(ValueError):
            NoiseSettings(epsilon=0.1, gate_count=0)


class TestOutputNoise:
    def test_zero_epsilon_identity(self):
        rng = np.random.default_rng(0)
        state_before = rng.bit_generator.state
        assert apply_output_noise(3.7, NoiseProfile(0.0, 100, 1), rng) == 3.7
        assert rng.bit_generator.state == state_before  # no random bits consumed

    def test_zero_mean_fluctuation(self):
        # f = 0: draws are pure Normal(0, sigma^2); check the Monte-Carlo mean.
        profile = NoiseProfile(0.005, 100, 1)
        rng = np.random.default_rng(77)
        n = 100_000
        draws = np.array([apply_output_noise(0.0, profile, rng) for _ in range(n)])
        sigma = noise_sigma(profile)
        assert abs(draws.mean()) < 3 * sigma / math.sqrt(n)

    def test_attenuation_and_sigma(self):
        profile = NoiseProfile(0.005, 100, 1)
        rng = np.random.default_rng(99)
        n = 100_000
        draws = np.array([apply_output_noise(1.0, profile, rng) for _ in range(n)])
        assert draws.mean() == pytest.approx(ATTENUATION_REFERENCE, abs=4 * SIGMA_REFERENCE / math.sqrt(n))
        assert draws.std(ddof=1) == pytest.approx(SIGMA_REFERENCE, rel=0.02)

    def test_sigma_coeff_zero_is_deterministic(self):
        profile = NoiseProfile(0.01, 80, 1, sigma_coeff=0.0)
        rng = np.random.default_rng(5)
        values = {apply_output_noise(2.0, profile, rng) for _ in range(10)}
        assert values == {(1.0 - p_error(profile)) * 2.0}

    def test_deterministic_given_stream(self):
        profile = NoiseProfile(0.01, 60, 1)
        a = [apply_output_noise(1.0, profile, np.random.default_rng(3)) for _ in range(1)]
        b = [apply_output_noise(1.0, profile, np.random.default_rng(3)) for _ in range(1)]
        assert a == b

    def test_resampled_every_invocation(self):
        profile = NoiseProfile(0.01, 60, 1)
        rng = np.random.default_rng(4)
        assert apply_output_noise(1.0, profile, rng) != apply_output_noise(1.0, profile, rng)

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            apply_output_noise(math.inf, NoiseProfile(0.01, 60, 1), np.random.default_rng(0))

    def test_gaussian_ks_against_normal(self):
        rng = np.random.default_rng(31415)
        samples = np.array([gaussian(rng, 1.0) for _ in range(10_000)])
        _, p = stats.kstest(samples, "norm")
        assert p > 0.01


class TestOptimalEpsilon:
    def test_closed_form(self):
        assert theoretical_optimal_epsilon(100, 1) == pytest.approx(math.log(2) / 100, abs=1e-15)
        assert theoretical_optimal_epsilon(1, 1) == pytest.approx(math.log(2), abs=1e-15)

    def test_published_band(self):
        # 50-100 gates at depth 1 span roughly 0.007 to 0.014
        assert theoretical_optimal_epsilon(100, 1) == pytest.approx(0.007, abs=5e-4)
        assert theoretical_optimal_epsilon(50, 1) == pytest.approx(0.014, abs=5e-4)

    def test_depth_halves(self):
        assert theoretical_optimal_epsilon(100, 2) == theoretical_optimal_epsilon(100, 1) / 2

    def test_p_error_near_half_at_optimum(self):
        for ngl in (50, 100, 1000):
            eps = theoretical_optimal_epsilon(ngl, 1)
            assert 0.49 <= p_error(NoiseProfile(eps, ngl, 1)) <= 0.51
