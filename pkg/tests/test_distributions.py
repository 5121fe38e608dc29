"""Tests for input-uncertainty models, their moments, and the sampler."""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from uqprop import (
    ContractError,
    GaussianInput,
    IndependentInput,
    Normal,
    NumericalError,
    Triangular,
    Uniform,
    distribution_from_dict,
    distribution_to_dict,
    family_from_variance,
    family_moments,
    moments,
    sample,
    std_normal_cdf,
)


def _phi_quadrature(x: float) -> float:
    """Independent oracle: adaptive quadrature of the standard normal pdf."""
    pdf = lambda t: math.exp(-0.5 * t * t) / math.sqrt(2.0 * math.pi)
    val, _ = quad(pdf, -np.inf, x, epsabs=1e-13, epsrel=1e-13)
    return val


class TestStdNormalCdf:
    def test_symmetry_point(self):
        assert std_normal_cdf(0.0) == 0.5

    def test_tail_saturation(self):
        assert abs(std_normal_cdf(10.0) - 1.0) <= 1e-15

    def test_value_at_one(self):
        # Oracle value 0.8413447460685429 from quadrature of the pdf.
        assert abs(_phi_quadrature(1.0) - 0.8413447460685429) < 1e-13
        assert abs(std_normal_cdf(1.0) - 0.8413447460685429) <= 1e-15

    def test_reflection_identity(self):
        x = np.linspace(-12.0, 12.0, 241)
        total = std_normal_cdf(x) + std_normal_cdf(-x)
        np.testing.assert_allclose(total, 1.0, rtol=0, atol=1e-15)

    def test_monotone(self):
        x = np.linspace(-8.0, 8.0, 2001)
        assert np.all(np.diff(std_normal_cdf(x)) >= 0)

    def test_quadrature_agreement_on_grid(self):
        for x in np.arange(-8.0, 8.5, 0.5):
            assert abs(std_normal_cdf(float(x)) - _phi_quadrature(float(x))) < 1e-12

    def test_rejects_non_finite(self):
        with pytest.raises(ContractError):
            std_normal_cdf(float("nan"))
        with pytest.raises(ContractError):
            std_normal_cdf(np.array([0.0, np.inf]))


class TestMoments:
    def test_uniform_unit(self):
        mean, var = family_moments(Uniform(0.0, 1.0))
        assert mean == 0.5
        assert abs(var - 1.0 / 12.0) < 1e-16

    def test_triangular_unit(self):
        mean, var = family_moments(Triangular(0.0, 1.0))
        assert mean == 0.5
        assert abs(var - 1.0 / 24.0) < 1e-16

    def test_gaussian_identity(self):
        mu = np.array([1.0, -2.0])
        gamma = np.array([[2.0, 0.3], [0.3, 1.0]])
        got_mu, got_gamma = moments(GaussianInput(mu, gamma))
        np.testing.assert_array_equal(got_mu, mu)
        np.testing.assert_array_equal(got_gamma, gamma)

    def test_independent_moments_diagonal(self):
        d = IndependentInput((Uniform(0.0, 2.0), Normal(1.0, 0.5), Triangular(-1.0, 1.0)))
        mu, gamma = moments(d)
        np.testing.assert_allclose(mu, [1.0, 1.0, 0.0])
        np.testing.assert_allclose(np.diag(gamma), [4.0 / 12.0, 0.5, 4.0 / 24.0])
        assert np.all(gamma == np.diag(np.diag(gamma)))


class TestFamilyFromVariance:
    def test_uniform_unit_width(self):
        fam = family_from_variance("uniform", 0.0, 1.0 / 12.0)
        assert isinstance(fam, Uniform)
        np.testing.assert_allclose([fam.a, fam.b], [-0.5, 0.5], atol=1e-15)

    def test_triangular_unit_width(self):
        fam = family_from_variance("triangular", 0.0, 1.0 / 24.0)
        assert isinstance(fam, Triangular)
        np.testing.assert_allclose([fam.a, fam.b], [-0.5, 0.5], atol=1e-15)

    def test_direct_substitution(self):
        fam = family_from_variance("uniform", 5.0, 3.0)
        assert abs((fam.b - fam.a) - 6.0) < 1e-12
        assert abs(0.5 * (fam.a + fam.b) - 5.0) < 1e-12

    @pytest.mark.parametrize("kind", ["uniform", "triangular"])
    def test_roundtrip_recovers_variance(self, kind):
        rng = np.random.default_rng(3)
        for _ in range(50):
            var = float(rng.uniform(1e-6, 10.0))
            center = float(rng.uniform(-5.0, 5.0))
            fam = family_from_variance(kind, center, var)
            got_mean, got_var = family_moments(fam)
            assert abs(got_var - var) <= 1e-12 * max(1.0, var)
            assert abs(got_mean - center) <= 1e-12

    def test_rejects_bad_input(self):
        with pytest.raises(ContractError):
            family_from_variance("uniform", 0.0, 0.0)
        with pytest.raises(ContractError):
            family_from_variance("lognormal", 0.0, 1.0)


class TestGaussianInputValidation:
    def test_rejects_asymmetric(self):
        with pytest.raises(ContractError):
            GaussianInput(np.zeros(2), np.array([[1.0, 0.5], [0.1, 1.0]]))

    def test_rejects_indefinite(self):
        with pytest.raises(NumericalError):
            GaussianInput(np.zeros(2), np.array([[1.0, 2.0], [2.0, 1.0]]))

    def test_rejects_dimension_mismatch(self):
        with pytest.raises(ContractError):
            GaussianInput(np.zeros(3), np.eye(2))

    def test_accepts_semidefinite(self):
        # Rank-one covariance: Cholesky fails but the eigenvalue test passes.
        v = np.array([1.0, 2.0])
        GaussianInput(np.zeros(2), np.outer(v, v))

    def test_accepts_zero_covariance(self):
        GaussianInput(np.zeros(3), np.zeros((3, 3)))


class TestSampling:
    def test_degenerate_covariance_copies_mean(self):
        mu = np.array([1.0, -2.0, 0.5])
        x = sample(GaussianInput(mu, np.zeros((3, 3))), 3, seed=0)
        np.testing.assert_array_equal(x, np.tile(mu, (3, 1)))

    def test_uniform_mean_within_5_se(self):
        n = 10**6
        x = sample(IndependentInput((Uniform(0.0, 1.0),)), n, seed=11)
        se = math.sqrt((1.0 / 12.0) / n)
        assert abs(x.mean() - 0.5) <= 5 * se

    def test_triangular_variance_within_5_se(self):
        # SE of the sample variance from the analytic fourth-moment formula:
        # Var(s^2) = (mu4 - sigma^4 (n-3)/(n-1)) / n, with mu4 of the unit
        # symmetric triangular computed by quadrature.
        n = 10**6
        mu4, _ = quad(lambda t: (t - 0.5) ** 4 * (4 * min(t, 1 - t)), 0.0, 1.0, points=[0.5])
        var = 1.0 / 24.0
        se = math.sqrt((mu4 - var**2 * (n - 3) / (n - 1)) / n)
        x = sample(IndependentInput((Triangular(0.0, 1.0),)), n, seed=12)
        assert abs(x.var(ddof=1) - var) <= 5 * se

    @pytest.mark.parametrize(
        "family",
        [Uniform(-2.0, 3.0), Triangular(-1.0, 4.0), Normal(0.7, 2.5)],
        ids=["uniform", "triangular", "normal"],
    )
    def test_empirical_moments_within_6_se(self, family):
        n = 10**6
        mean, var = family_moments(family)
        x = sample(IndependentInput((family,)), n, seed=21).ravel()
        se_mean = math.sqrt(var / n)
        assert abs(x.mean() - mean) <= 6 * se_mean
        m4 = np.mean((x - x.mean()) ** 4)
        se_var = math.sqrt(max(m4 - x.var(ddof=1) ** 2 * (n - 3) / (n - 1), 0.0) / n)
        assert abs(x.var(ddof=1) - var) <= 6 * se_var

    def test_gaussian_empirical_covariance(self):
        gamma = np.array([[1.0, 0.6], [0.6, 2.0]])
        x = sample(GaussianInput(np.array([1.0, 2.0]), gamma), 10**6, seed=5)
        got = np.cov(x.T)
        np.testing.assert_allclose(got, gamma, atol=0.02)

    def test_bit_reproducible(self):
        d = GaussianInput(np.zeros(2), np.eye(2))
        a = sample(d, 1000, seed=42)
        b = sample(d, 1000, seed=42)
        np.testing.assert_array_equal(a, b)

    def test_streams_are_disjoint(self):
        d = IndependentInput((Normal(0.0, 1.0),))
        a = sample(d, 100, seed=42, stream=0)
        b = sample(d, 100, seed=42, stream=1)
        assert not np.array_equal(a, b)

    def test_rejects_bad_count(self):
        with pytest.raises(ContractError):
            sample(IndependentInput((Uniform(0, 1),)), 0, seed=0)


class TestDescriptors:
    def test_gaussian_roundtrip(self):
        d = GaussianInput(np.array([1.0, 2.0]), np.array([[1.0, 0.1], [0.1, 2.0]]))
        back = distribution_from_dict(distribution_to_dict(d))
        np.testing.assert_array_equal(back.mu, d.mu)
        np.testing.assert_array_equal(back.gamma, d.gamma)

    def test_independent_roundtrip(self):
        d = IndependentInput((Uniform(0.0, 1.0), Triangular(-1.0, 1.0), Normal(0.0, 2.0)))
        back = distribution_from_dict(distribution_to_dict(d))
        assert back.components == d.components

    def test_rejects_unknown_family(self):
        with pytest.raises(ContractError):
            distribution_from_dict(
                {"type": "independent", "components": [{"family": "beta", "a": 0, "b": 1}]}
            )

    def test_rejects_unknown_type(self):
        with pytest.raises(ContractError):
            distribution_from_dict({"type": "mixture", "parts": []})

    def test_exact_field_names(self):
        d = distribution_from_dict({"type": "gaussian", "mu": [0.0], "gamma": [[1.0]]})
        assert isinstance(d, GaussianInput)


class TestFamilyValidation:
    def test_interval_needs_a_below_b(self):
        with pytest.raises(ContractError):
            Uniform(1.0, 1.0)
        with pytest.raises(ContractError):
            Triangular(2.0, -1.0)

    def test_normal_needs_positive_variance(self):
        with pytest.raises(ContractError):
            Normal(0.0, 0.0)
