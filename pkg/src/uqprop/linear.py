"""Linear point predictors and exact propagation of input moments.

For a linear model ``y = beta . x + const`` the propagated output mean is
``beta . mu`` and the variance is ``beta' Gamma beta``, whatever the input
distribution; when the input is multivariate Gaussian the output is itself
Gaussian, which additionally licenses credible intervals.

Fitting standardizes the columns (centre, scale to unit standard deviation)
and centres the target; the transform is stored on the model so prediction
and propagation can map raw-coordinate inputs into the fitted coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.special import ndtri

from .distributions import GaussianInput, InputDistribution, moments
from .errors import ContractError, NumericalError

VARIANCE_CLAMP = 1e-12


@dataclass(frozen=True)
class CenteringTransform:
    """Column-wise affine map applied to inputs at fit time, plus the target mean."""

    x_mean: np.ndarray
    x_scale: np.ndarray
    y_mean: float

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.x_mean, dtype=float)).copy()
        scale = np.atleast_1d(np.asarray(self.x_scale, dtype=float)).copy()
        if mean.shape != scale.shape or mean.ndim != 1:
            raise ContractError("x_mean and x_scale must be vectors of equal length")
        if np.any(scale <= 0) or not np.all(np.isfinite(scale)):
            raise ContractError("all scales must be finite and > 0")
        mean.flags.writeable = False
        scale.flags.writeable = False
        object.__setattr__(self, "x_mean", mean)
        object.__setattr__(self, "x_scale", scale)
        object.__setattr__(self, "y_mean", float(self.y_mean))

    @property
    def dim(self) -> int:
        return self.x_mean.shape[0]

    @classmethod
    def identity(cls, m: int) -> "CenteringTransform":
        return cls(np.zeros(m), np.ones(m), 0.0)

    def transform(self, X: np.ndarray) -> np.ndarray:
        """Map raw inputs (vector or matrix of rows) into fitted coordinates."""
        return (np.asarray(X, dtype=float) - self.x_mean) / self.x_scale

    def transform_covariance(self, gamma: np.ndarray) -> np.ndarray:
        """Map a raw-coordinate covariance into fitted coordinates."""
        inv = 1.0 / self.x_scale
        return gamma * np.outer(inv, inv)


@dataclass(frozen=True)
class Moments:
    """Propagated output mean and variance, with an output-family tag.

    ``family`` is ``"gaussian"`` only when the output distribution is known
    to be Gaussian (linear model, Gaussian input); otherwise
    ``"unspecified"``: only the two moments are exact.  A variance in
    ``[-1e-12, 0)`` is clamped to zero; anything more negative raises.
    """

    mean: float
    variance: float
    family: str = "unspecified"

    def __post_init__(self):
        var = float(self.variance)
        if var < 0.0:
            if var < -VARIANCE_CLAMP:
                raise NumericalError(f"variance {var:.3e} below -{VARIANCE_CLAMP:.0e} clamp")
            var = 0.0
        if self.family not in ("gaussian", "unspecified"):
            raise ContractError(f"unknown moments family tag {self.family!r}")
        object.__setattr__(self, "mean", float(self.mean))
        object.__setattr__(self, "variance", var)


@dataclass(frozen=True)
class LinearModel:
    """Weight vector in fitted coordinates plus the fit-time transform."""

    beta: np.ndarray
    centering: CenteringTransform

    def __post_init__(self):
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float)).copy()
        if beta.ndim != 1 or not np.all(np.isfinite(beta)):
            raise ContractError("beta must be a finite vector")
        if beta.shape[0] != self.centering.dim:
            raise ContractError("beta length does not match the centering transform")
        beta.flags.writeable = False
        object.__setattr__(self, "beta", beta)

    @property
    def dim(self) -> int:
        return self.beta.shape[0]

    @property
    def raw_coefficients(self) -> np.ndarray:
        """Gradient of the prediction with respect to raw (unscaled) inputs."""
        return self.beta / self.centering.x_scale


def _standardize(X: np.ndarray, y: np.ndarray, standardize: bool):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.shape[0]:
        raise ContractError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
        raise ContractError("training data must be finite")
    if not standardize:
        transform = CenteringTransform.identity(X.shape[1])
        return X.copy(), y.copy(), transform
    x_mean = X.mean(axis=0)
    x_scale = X.std(axis=0)
    dead = np.flatnonzero(x_scale == 0.0)
    if dead.size:
        raise ContractError(f"zero-variance feature column(s) at fit time: {dead.tolist()}")
    y_mean = float(y.mean())
    transform = CenteringTransform(x_mean, x_scale, y_mean)
    return (X - x_mean) / x_scale, y - y_mean, transform


def fit_ols(X: np.ndarray, y: np.ndarray, standardize: bool = True) -> LinearModel:
    """Ordinary least squares via QR on the standardized design matrix."""
    C, yc, transform = _standardize(X, y, standardize)
    n, m = C.shape
    if n < m:
        raise ContractError(f"least squares needs n >= m, got n={n}, m={m}")
    q, r = np.linalg.qr(C)
    diag = np.abs(np.diag(r))
    tol = max(n, m) * np.finfo(float).eps * (diag.max() if diag.size else 0.0)
    rank = int(np.sum(diag > tol))
    if rank < m:
        raise NumericalError(f"design matrix is rank deficient: rank {rank} < {m}")
    beta = solve_triangular(r, q.T @ yc)
    return LinearModel(beta, transform)


def fit_ridge(X: np.ndarray, y: np.ndarray, sigma2: float, standardize: bool = True) -> LinearModel:
    """Ridge regression: solves (C'C + sigma2 I) beta = C'y by Cholesky."""
    if sigma2 < 0:
        raise ContractError(f"sigma2 must be >= 0, got {sigma2}")
    if sigma2 == 0:
        return fit_ols(X, y, standardize=standardize)
    C, yc, transform = _standardize(X, y, standardize)
    m = C.shape[1]
    normal = C.T @ C + sigma2 * np.eye(m)
    beta = cho_solve(cho_factor(normal, lower=True), C.T @ yc)
    return LinearModel(beta, transform)


def predict_linear(model: LinearModel, x: np.ndarray):
    """Point prediction at ``x``; accepts a vector or a matrix of row points."""
    xa = np.asarray(x, dtype=float)
    if xa.shape[-1] != model.dim:
        raise ContractError(f"input dimension {xa.shape[-1]} != model dimension {model.dim}")
    out = model.centering.transform(xa) @ model.beta + model.centering.y_mean
    return float(out) if xa.ndim == 1 else out


def propagate_linear(model: LinearModel, d: InputDistribution) -> Moments:
    """Exact output mean and variance under the input distribution.

    The input moments are mapped into the model's fitted coordinates; the
    family tag is ``gaussian`` exactly when ``d`` is the Gaussian variant.
    """
    mu, gamma = moments(d)
    if mu.shape[0] != model.dim:
        raise ContractError(f"distribution dimension {mu.shape[0]} != model dimension {model.dim}")
    mu_c = model.centering.transform(mu)
    gamma_c = model.centering.transform_covariance(gamma)
    mean = float(model.beta @ mu_c) + model.centering.y_mean
    variance = float(model.beta @ gamma_c @ model.beta)
    family = "gaussian" if isinstance(d, GaussianInput) else "unspecified"
    return Moments(mean, variance, family)


def credible_interval(mom: Moments, coverage: float) -> tuple[float, float]:
    """Symmetric interval with the requested coverage; Gaussian outputs only."""
    if mom.family != "gaussian":
        raise ContractError(
            "credible intervals need a gaussian output family; "
            "only the two moments are known for this result"
        )
    if not (0.0 < coverage < 1.0):
        raise ContractError(f"coverage must be in (0, 1), got {coverage}")
    z = float(ndtri(0.5 * (1.0 + coverage)))
    half = z * np.sqrt(mom.variance)
    return mom.mean - half, mom.mean + half


# --- JSON model format ----------------------------------------------------

def linear_to_dict(model: LinearModel) -> dict:
    return {
        "type": "linear",
        "beta": model.beta.tolist(),
        "x_mean": model.centering.x_mean.tolist(),
        "x_scale": model.centering.x_scale.tolist(),
        "y_mean": model.centering.y_mean,
    }


def linear_from_dict(obj: dict) -> LinearModel:
    if obj.get("type") != "linear":
        raise ContractError(f"expected model type 'linear', got {obj.get('type')!r}")
    transform = CenteringTransform(
        np.asarray(obj["x_mean"], dtype=float),
        np.asarray(obj["x_scale"], dtype=float),
        float(obj["y_mean"]),
    )
    return LinearModel(np.asarray(obj["beta"], dtype=float), transform)
