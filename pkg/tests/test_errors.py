"""Error-model distributions: analytic moments, goodness of fit, support
bounds, and the counter-based determinism contract."""

import math

import numpy as np
import pytest
from scipy import stats

from ddsim.errors import (
    GAMMA_E,
    ErrorParameters,
    ErrorRealization,
    draw_realization,
    ideal_realization,
    realizations,
    sample_detuning,
    sample_edge_error,
    scale_errors,
)

N_BIG = 1_000_000


@pytest.fixture(scope="module")
def big_batch(paper_params):
    return realizations(paper_params, seed=42, count=N_BIG)


class TestEdgeErrorLaw:
    def test_zero_amplitude(self, rng):
        assert sample_edge_error(0.0, rng) == 0.0

    def test_mean_is_zero(self, big_batch):
        # E[1 - 3u^2] = 0 exactly for the uniform latent
        assert abs(np.mean(big_batch.epsilon)) < 0.002

    def test_variance(self, big_batch):
        # E[(1 - 3u^2)^2] = 4/5, so var = 0.8 * eps0^2 = 0.072
        assert np.var(big_batch.epsilon) == pytest.approx(0.072, abs=0.002)

    def test_support(self, big_batch, paper_params):
        eps0 = paper_params.epsilon0
        assert big_batch.epsilon.min() >= -2 * eps0 - 1e-12
        assert big_batch.epsilon.max() <= eps0 + 1e-12

    def test_support_negative_amplitude(self, big_batch, paper_params):
        n0 = paper_params.n0  # negative: support reverses to [n0, -2 n0]
        assert big_batch.n_z.min() >= n0 - 1e-12
        assert big_batch.n_z.max() <= -2 * n0 + 1e-12

    def test_goodness_of_fit(self, big_batch, paper_params):
        # analytic CDF: F(e) = 1 - sqrt((1 - e/a0) / 3) on [-2 a0, a0]
        a0 = paper_params.epsilon0
        edges = np.linspace(-2 * a0, a0, 41)
        cdf = 1.0 - np.sqrt((1.0 - edges / a0) / 3.0)
        cdf[0], cdf[-1] = 0.0, 1.0
        expected = np.diff(cdf) * N_BIG
        observed, _ = np.histogram(big_batch.epsilon, bins=edges)
        result = stats.chisquare(observed, expected)
        assert result.pvalue > 0.01


class TestDetuning:
    def test_zero_width(self, rng):
        assert sample_detuning(0.0, rng) == 0.0
        params = ErrorParameters(b=0.0)
        batch = realizations(params, seed=3, count=1000)
        assert np.all(batch.detuning == 0.0)

    def test_mean(self, big_batch, paper_params):
        assert abs(np.mean(big_batch.detuning)) < 4 * paper_params.b / 1000

    def test_std_matches_linewidth(self, big_batch):
        assert np.std(big_batch.detuning) == pytest.approx(0.050, abs=0.001)

    def test_goodness_of_fit(self, big_batch, paper_params):
        b = paper_params.b
        edges = np.linspace(-4 * b, 4 * b, 41)
        cdf = stats.norm.cdf(edges, scale=b)
        expected = np.diff(cdf) * N_BIG
        observed, _ = np.histogram(
            big_batch.detuning[np.abs(big_batch.detuning) < 4 * b], bins=edges
        )
        # drop the tail mass outside the histogram range
        result = stats.chisquare(observed, expected * observed.sum() / expected.sum())
        assert result.pvalue > 0.01

    def test_dephasing_time_scale(self, paper_params):
        t2_star = 1.0 / (paper_params.gamma_e * paper_params.b)
        assert 1.0e-6 < t2_star < 1.7e-6


class TestIndependence:
    def test_pairwise_correlations(self, big_batch):
        for a, b in (
            (big_batch.epsilon, big_batch.n_z),
            (big_batch.epsilon, big_batch.detuning),
            (big_batch.n_z, big_batch.detuning),
        ):
            assert abs(np.corrcoef(a, b)[0, 1]) < 0.01


class TestDeterminism:
    def test_bitwise_repeatable(self, paper_params):
        a = realizations(paper_params, seed=7, count=500)
        b = realizations(paper_params, seed=7, count=500)
        assert np.array_equal(a.detuning, b.detuning)
        assert np.array_equal(a.epsilon, b.epsilon)
        assert np.array_equal(a.n_z, b.n_z)

    def test_prefix_stability(self, paper_params):
        # realization i depends only on (seed, i), not on the batch size
        small = realizations(paper_params, seed=7, count=50)
        large = realizations(paper_params, seed=7, count=500)
        assert np.array_equal(small.epsilon, large.epsilon[:50])

    def test_slice_matches_offset_draw(self, paper_params):
        # worker partitions reproduce the central draw bitwise
        full = realizations(paper_params, seed=7, count=100)
        part = realizations(paper_params, seed=7, count=30, start=20)
        assert np.array_equal(part.detuning, full.detuning[20:50])
        assert np.array_equal(part.n_z, full.n_z[20:50])

    def test_seed_changes_stream(self, paper_params):
        a = realizations(paper_params, seed=1, count=100)
        b = realizations(paper_params, seed=2, count=100)
        assert not np.array_equal(a.epsilon, b.epsilon)

    def test_scalar_draw_matches_batch(self, paper_params):
        one = draw_realization(paper_params, seed=7, index=33)
        batch = realizations(paper_params, seed=7, count=64)
        assert one.detuning == batch.detuning[33]
        assert one.epsilon == batch.epsilon[33]
        assert one.n_z == batch.n_z[33]


class TestTypes:
    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            ErrorParameters(b=-1.0)
        with pytest.raises(ValueError):
            ErrorParameters(t_p=20e-6)  # pulse longer than the delay
        with pytest.raises(ValueError):
            ErrorParameters(epsilon0=math.nan)

    def test_ideal_realization(self):
        real = ideal_realization()
        assert real.epsilon == 0.0 and real.n_z == 0.0 and real.detuning == 0.0

    def test_scale_errors_leaves_detuning(self):
        real = ErrorRealization(
            detuning=0.05, epsilon=0.3, n_z=-0.12, m_x=0.02, n_y=0.01, p_x=0.04
        )
        half = scale_errors(real, 0.5)
        assert half.detuning == real.detuning
        assert half.epsilon == pytest.approx(0.15)
        assert half.n_z == pytest.approx(-0.06)
        assert half.m_x == pytest.approx(0.01)
        assert half.p_x == pytest.approx(0.02)

    def test_eps_y_override(self):
        real = ErrorRealization(detuning=0.0, epsilon=0.3, n_z=0.0)
        assert real.eps_y == 0.3
        real2 = ErrorRealization(detuning=0.0, epsilon=0.3, n_z=0.0, epsilon_y=0.1)
        assert real2.eps_y == 0.1
        assert scale_errors(real2, 0.5).eps_y == pytest.approx(0.05)

    def test_gamma_default_consistent_with_pulse_calibration(self, paper_params):
        # pi / (gamma_e * t_p) ~ 1 Gauss drive for the 0.18 us pulse
        b_p = math.pi / (GAMMA_E * paper_params.t_p)
        assert b_p == pytest.approx(1.0, abs=0.02)
