"""Tests for linear fitting, prediction, propagation, and credible intervals."""

import json

import numpy as np
import pytest
from scipy.optimize import brentq

from uqprop import (
    CenteringTransform,
    ContractError,
    GaussianInput,
    IndependentInput,
    LinearModel,
    Moments,
    Normal,
    NumericalError,
    Uniform,
    credible_interval,
    fit_ols,
    fit_ridge,
    linear_from_dict,
    linear_to_dict,
    predict_linear,
    propagate_linear,
    std_normal_cdf,
)


def _standardized(X, y):
    """The same standardization the fit applies, recomputed independently."""
    C = (X - X.mean(axis=0)) / X.std(axis=0)
    return C, y - y.mean()


class TestFitOls:
    def test_exact_interpolation(self):
        X = np.array([[1.0], [2.0], [3.0]])
        y = np.array([2.0, 4.0, 6.0])
        model = fit_ols(X, y, standardize=False)
        np.testing.assert_allclose(model.beta, [2.0], atol=1e-14)
        model_std = fit_ols(X, y)
        np.testing.assert_allclose(model_std.raw_coefficients, [2.0], atol=1e-12)
        np.testing.assert_allclose(predict_linear(model_std, X), y, atol=1e-12)

    def test_orthogonal_target_gives_zero_beta(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((8, 3))
        v = rng.standard_normal(8)
        # Project v off the column space so the normal equations give 0.
        y = v - X @ np.linalg.solve(X.T @ X, X.T @ v)
        model = fit_ols(X, y, standardize=False)
        np.testing.assert_allclose(model.beta, 0.0, atol=1e-12)

    def test_matches_normal_equations_oracle(self):
        rng = np.random.default_rng(1)
        X = rng.standard_normal((50, 4)) * rng.uniform(0.5, 3.0, 4) + rng.uniform(-2, 2, 4)
        y = rng.standard_normal(50)
        model = fit_ols(X, y)
        C, yc = _standardized(X, y)
        beta_oracle = np.linalg.solve(C.T @ C, C.T @ yc)
        np.testing.assert_allclose(model.beta, beta_oracle, rtol=1e-10, atol=1e-12)

    def test_residual_gradient_vanishes(self):
        rng = np.random.default_rng(2)
        X = rng.standard_normal((30, 3))
        y = rng.standard_normal(30)
        model = fit_ols(X, y)
        C, yc = _standardized(X, y)
        grad = C.T @ (yc - C @ model.beta)
        assert np.linalg.norm(grad) <= 1e-8 * np.linalg.norm(C.T @ yc)

    def test_fitted_values_match_oracle(self):
        rng = np.random.default_rng(3)
        X = rng.standard_normal((25, 2))
        y = rng.standard_normal(25)
        model = fit_ols(X, y)
        C, yc = _standardized(X, y)
        fitted_oracle = C @ np.linalg.solve(C.T @ C, C.T @ yc) + y.mean()
        np.testing.assert_allclose(predict_linear(model, X), fitted_oracle, atol=1e-10)

    def test_rank_deficiency_names_rank(self):
        rng = np.random.default_rng(4)
        col = rng.standard_normal(10)
        X = np.column_stack([col, 2.0 * col, rng.standard_normal(10)])
        with pytest.raises(NumericalError, match="rank 2 < 3"):
            fit_ols(X, rng.standard_normal(10))

    def test_underdetermined_rejected(self):
        with pytest.raises(ContractError):
            fit_ols(np.ones((2, 5)), np.ones(2), standardize=False)

    def test_zero_variance_column_rejected(self):
        X = np.column_stack([np.ones(6), np.arange(6.0)])
        with pytest.raises(ContractError, match="zero-variance"):
            fit_ols(X, np.arange(6.0))


class TestFitRidge:
    def test_zero_sigma2_reduces_to_ols(self):
        rng = np.random.default_rng(5)
        X = rng.standard_normal((20, 3))
        y = rng.standard_normal(20)
        a = fit_ridge(X, y, 0.0)
        b = fit_ols(X, y)
        np.testing.assert_allclose(a.beta, b.beta, rtol=1e-10)

    def test_shrinkage_limit(self):
        rng = np.random.default_rng(6)
        X = rng.standard_normal((20, 3))
        y = rng.standard_normal(20)
        model = fit_ridge(X, y, 1e12)
        C, yc = _standardized(X, y)
        assert np.linalg.norm(model.beta) <= 1e-9 * np.linalg.norm(C.T @ yc)

    def test_matches_direct_solve(self):
        rng = np.random.default_rng(7)
        X = rng.standard_normal((20, 5))
        y = rng.standard_normal(20)
        model = fit_ridge(X, y, 0.7)
        C, yc = _standardized(X, y)
        beta_oracle = np.linalg.solve(C.T @ C + 0.7 * np.eye(5), C.T @ yc)
        np.testing.assert_allclose(model.beta, beta_oracle, rtol=1e-10, atol=1e-12)

    def test_underdetermined_allowed_with_regularization(self):
        rng = np.random.default_rng(8)
        X = rng.standard_normal((4, 6))
        model = fit_ridge(X, rng.standard_normal(4), 0.5)
        assert model.dim == 6

    def test_negative_sigma2_rejected(self):
        with pytest.raises(ContractError, match="sigma2"):
            fit_ridge(np.eye(3), np.ones(3), -1.0)


class TestPredict:
    def test_zero_beta_returns_y_mean(self):
        ct = CenteringTransform(np.zeros(2), np.ones(2), 5.0)
        model = LinearModel(np.zeros(2), ct)
        assert predict_linear(model, np.array([3.0, -7.0])) == 5.0

    def test_direct_substitution(self):
        ct = CenteringTransform(np.zeros(2), np.ones(2), 1.0)
        model = LinearModel(np.array([2.0, -1.0]), ct)
        assert predict_linear(model, np.array([3.0, 4.0])) == 3.0

    def test_dimension_mismatch(self):
        model = LinearModel(np.ones(2), CenteringTransform.identity(2))
        with pytest.raises(ContractError):
            predict_linear(model, np.ones(3))


class TestPropagateLinear:
    def test_direct_substitution(self):
        model = LinearModel(np.array([2.0, -1.0]), CenteringTransform.identity(2))
        d = GaussianInput(np.array([3.0, 4.0]), np.eye(2))
        mom = propagate_linear(model, d)
        assert mom.mean == 2.0
        assert mom.variance == 5.0
        assert mom.family == "gaussian"

    def test_degenerate_covariance(self):
        model = LinearModel(np.array([1.5, 0.5]), CenteringTransform.identity(2))
        mu = np.array([1.0, 2.0])
        mom = propagate_linear(model, GaussianInput(mu, np.zeros((2, 2))))
        assert mom.variance == 0.0
        assert mom.mean == predict_linear(model, mu)

    def test_family_tag_follows_variant(self):
        model = LinearModel(np.ones(2), CenteringTransform.identity(2))
        gauss = GaussianInput(np.zeros(2), np.eye(2))
        indep = IndependentInput((Normal(0.0, 1.0), Normal(0.0, 1.0)))
        assert propagate_linear(model, gauss).family == "gaussian"
        assert propagate_linear(model, indep).family == "unspecified"

    def test_independent_input_uses_diagonal_moments(self):
        model = LinearModel(np.array([2.0, 3.0]), CenteringTransform.identity(2))
        d = IndependentInput((Uniform(0.0, 1.0), Normal(1.0, 0.25)))
        mom = propagate_linear(model, d)
        assert abs(mom.mean - (2.0 * 0.5 + 3.0 * 1.0)) <= 1e-15
        assert abs(mom.variance - (4.0 / 12.0 + 9.0 * 0.25)) <= 1e-15

    def test_centering_is_applied(self):
        ct = CenteringTransform(np.array([1.0, -1.0]), np.array([2.0, 4.0]), 3.0)
        model = LinearModel(np.array([1.0, 2.0]), ct)
        mu = np.array([2.0, 1.0])
        gamma = np.array([[0.5, 0.1], [0.1, 0.3]])
        mom = propagate_linear(model, GaussianInput(mu, gamma))
        # Independent evaluation in raw coordinates: plain chain rule.
        raw_beta = model.raw_coefficients
        assert abs(mom.mean - (raw_beta @ (mu - ct.x_mean) + 3.0)) <= 1e-14
        assert abs(mom.variance - raw_beta @ gamma @ raw_beta) <= 1e-14

    def test_permutation_invariance(self):
        rng = np.random.default_rng(9)
        beta = rng.standard_normal(5)
        A = rng.standard_normal((5, 5))
        gamma = A @ A.T
        mu = rng.standard_normal(5)
        perm = rng.permutation(5)
        base = propagate_linear(
            LinearModel(beta, CenteringTransform.identity(5)), GaussianInput(mu, gamma)
        )
        permuted = propagate_linear(
            LinearModel(beta[perm], CenteringTransform.identity(5)),
            GaussianInput(mu[perm], gamma[np.ix_(perm, perm)]),
        )
        assert abs(base.variance - permuted.variance) <= 1e-12 * max(1.0, base.variance)
        assert abs(base.mean - permuted.mean) <= 1e-12

    def test_variance_nonnegative_over_random_psd(self):
        rng = np.random.default_rng(10)
        for _ in range(100):
            m = rng.integers(1, 6)
            beta = rng.standard_normal(m)
            A = rng.standard_normal((m, m))
            mom = propagate_linear(
                LinearModel(beta, CenteringTransform.identity(m)),
                GaussianInput(rng.standard_normal(m), A @ A.T),
            )
            assert mom.variance >= 0.0

    def test_diagonal_sum_identity(self):
        beta = np.array([1.0, -2.0, 3.0])
        diag = np.array([0.5, 1.5, 0.25])
        mom = propagate_linear(
            LinearModel(beta, CenteringTransform.identity(3)),
            GaussianInput(np.zeros(3), np.diag(diag)),
        )
        assert mom.variance == float(np.sum(beta**2 * diag))

    def test_dimension_mismatch(self):
        model = LinearModel(np.ones(2), CenteringTransform.identity(2))
        with pytest.raises(ContractError):
            propagate_linear(model, GaussianInput(np.zeros(3), np.eye(3)))


class TestCredibleInterval:
    def test_95_percent_endpoints(self):
        # Oracle: root-find the quantile on the quadrature-checked CDF.
        z_oracle = brentq(lambda z: std_normal_cdf(z) - 0.975, 0.0, 10.0, xtol=1e-12)
        lo, hi = credible_interval(Moments(0.0, 1.0, "gaussian"), 0.95)
        assert abs(hi - z_oracle) <= 1e-10
        assert abs(hi - 1.959964) <= 1e-5
        assert abs(lo + 1.959964) <= 1e-5

    def test_zero_variance_collapses(self):
        lo, hi = credible_interval(Moments(2.5, 0.0, "gaussian"), 0.9)
        assert lo == hi == 2.5

    def test_unspecified_family_rejected(self):
        with pytest.raises(ContractError, match="gaussian"):
            credible_interval(Moments(0.0, 1.0, "unspecified"), 0.95)

    def test_bad_coverage_rejected(self):
        with pytest.raises(ContractError):
            credible_interval(Moments(0.0, 1.0, "gaussian"), 1.0)


class TestMomentsClamp:
    def test_small_negative_clamps_to_zero(self):
        assert Moments(0.0, -1e-13).variance == 0.0

    def test_large_negative_raises(self):
        with pytest.raises(NumericalError):
            Moments(0.0, -1e-9)


class TestModelJson:
    def test_roundtrip_bit_exact(self):
        rng = np.random.default_rng(11)
        X = rng.standard_normal((30, 3))
        y = rng.standard_normal(30)
        model = fit_ols(X, y)
        blob = json.dumps(linear_to_dict(model))
        back = linear_from_dict(json.loads(blob))
        np.testing.assert_array_equal(back.beta, model.beta)
        np.testing.assert_array_equal(back.centering.x_mean, model.centering.x_mean)
        np.testing.assert_array_equal(back.centering.x_scale, model.centering.x_scale)
        assert back.centering.y_mean == model.centering.y_mean

    def test_wrong_type_rejected(self):
        with pytest.raises(ContractError):
            linear_from_dict({"type": "kernel_rbf"})
