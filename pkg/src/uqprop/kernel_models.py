"""Kernel point predictors of the form ``y = alpha . kstar + const``.

Kernel ridge regression and the Gaussian-process posterior mean share this
form and coincide for the same length scales and regularization, so one
model type covers both, plus externally trained coefficient vectors (for
instance sparse support-vector weights).  Hyperparameters are selected by
maximizing the Gaussian-process log marginal likelihood over a coarse
log-space grid followed by Nelder-Mead refinement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import minimize

from .errors import ContractError, NumericalError
from .kernels import RbfParams, kernel_matrix, kstar_matrix
from .linear import CenteringTransform, _standardize

_PROVENANCES = ("ridge", "gp", "external")

# Jitter policy for SPD solves: single retry at 1e-10 times the mean diagonal.
_JITTER_REL = 1e-10


@dataclass(frozen=True)
class KernelModel:
    """Coefficients, training inputs (fitted coordinates), and kernel setup.

    ``provenance`` records how ``alpha`` was obtained; posterior-variance
    queries are only meaningful for models fitted here (``ridge`` or ``gp``),
    since an external ``alpha`` alone does not determine the posterior.
    """

    alpha: np.ndarray
    train_x: np.ndarray
    params: RbfParams
    sigma2: float
    centering: CenteringTransform
    provenance: str = "ridge"

    def __post_init__(self):
        alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float)).copy()
        train_x = np.atleast_2d(np.asarray(self.train_x, dtype=float)).copy()
        if alpha.ndim != 1 or alpha.shape[0] != train_x.shape[0]:
            raise ContractError("alpha length must equal the number of training rows")
        if train_x.shape[1] != self.params.dim or self.centering.dim != self.params.dim:
            raise ContractError("training inputs, length scales and centering disagree on dimension")
        if self.sigma2 < 0:
            raise ContractError(f"sigma2 must be >= 0, got {self.sigma2}")
        if self.provenance not in _PROVENANCES:
            raise ContractError(f"unknown provenance {self.provenance!r}")
        alpha.flags.writeable = False
        train_x.flags.writeable = False
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "train_x", train_x)
        object.__setattr__(self, "sigma2", float(self.sigma2))

    @property
    def n_train(self) -> int:
        return self.train_x.shape[0]

    @property
    def dim(self) -> int:
        return self.train_x.shape[1]


def _solve_spd(M: np.ndarray, rhs: np.ndarray, allow_jitter: bool):
    """Cholesky solve with the package jitter policy (single retry)."""
    try:
        factor = cho_factor(M, lower=True)
        return factor, cho_solve(factor, rhs)
    except np.linalg.LinAlgError:
        pass
    jitter = _JITTER_REL * float(np.mean(np.diag(M)))
    if not allow_jitter:
        raise NumericalError(
            "Cholesky factorization failed and jitter is disabled for sigma2 = 0 "
            "(exact interpolation was requested)"
        )
    try:
        factor = cho_factor(M + jitter * np.eye(M.shape[0]), lower=True)
        return factor, cho_solve(factor, rhs)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"Cholesky factorization failed after jitter retry of {jitter:.3e}"
        ) from exc


def fit_kernel_ridge(
    X: np.ndarray,
    y: np.ndarray,
    params: RbfParams,
    sigma2: float,
    standardize: bool = True,
    provenance: str = "ridge",
) -> KernelModel:
    """Solve (K + sigma2 I) alpha = y_centered on the standardized inputs.

    With ``sigma2 = 0`` the Gram matrix must be invertible and no jitter is
    applied; predictions then interpolate the training targets.
    """
    if sigma2 < 0:
        raise ContractError(f"sigma2 must be >= 0, got {sigma2}")
    Xs, yc, transform = _standardize(X, y, standardize)
    if Xs.shape[1] != params.dim:
        raise ContractError(f"X has {Xs.shape[1]} columns, expected {params.dim}")
    K = kernel_matrix(Xs, params)
    M = K + sigma2 * np.eye(Xs.shape[0])
    _, alpha = _solve_spd(M, yc, allow_jitter=sigma2 > 0)
    scale = float(np.linalg.norm(yc))
    residual = float(np.linalg.norm(M @ alpha - yc))
    if residual > 1e-8 * max(scale, 1e-30):
        raise NumericalError(f"fit residual {residual:.3e} exceeds 1e-8 relative tolerance")
    return KernelModel(alpha, Xs, params, sigma2, transform, provenance)


def predict_kernel(model: KernelModel, xstar):
    """Point prediction at ``xstar``; accepts a vector or a matrix of row points."""
    xa = np.asarray(xstar, dtype=float)
    if xa.shape[-1] != model.dim:
        raise ContractError(f"input dimension {xa.shape[-1]} != model dimension {model.dim}")
    xs = model.centering.transform(np.atleast_2d(xa))
    out = kstar_matrix(model.train_x, xs, model.params) @ model.alpha + model.centering.y_mean
    return float(out[0]) if xa.ndim == 1 else out


def gp_posterior_variance(model: KernelModel, xstar):
    """Posterior predictive variance at ``xstar`` (model uncertainty only).

    This quantifies uncertainty in the fitted function itself and is distinct
    from propagated input uncertainty.  Unavailable for external coefficient
    vectors.
    """
    if model.provenance == "external":
        raise ContractError(
            "posterior variance is undefined for externally supplied coefficients"
        )
    xa = np.asarray(xstar, dtype=float)
    if xa.shape[-1] != model.dim:
        raise ContractError(f"input dimension {xa.shape[-1]} != model dimension {model.dim}")
    xs = model.centering.transform(np.atleast_2d(xa))
    ks = kstar_matrix(model.train_x, xs, model.params)
    M = kernel_matrix(model.train_x, model.params) + model.sigma2 * np.eye(model.n_train)
    _, v = _solve_spd(M, ks.T, allow_jitter=model.sigma2 > 0)
    var = 1.0 - np.einsum("qn,nq->q", ks, v)
    if np.any(var < -1e-12):
        raise NumericalError(f"posterior variance {var.min():.3e} below -1e-12 clamp")
    var = np.clip(var, 0.0, None)
    return float(var[0]) if xa.ndim == 1 else var


def from_external_alpha(
    alpha: np.ndarray,
    X: np.ndarray,
    params: RbfParams,
    centering: CenteringTransform | None = None,
) -> KernelModel:
    """Wrap an externally trained coefficient vector (SVM, RVM, ...).

    ``X`` is in raw input units and is mapped through ``centering`` (identity
    by default).  Sparse coefficient vectors are kept as-is, zeros included;
    prediction and propagation then work unchanged.
    """
    Xa = np.atleast_2d(np.asarray(X, dtype=float))
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    if alpha.shape[0] != Xa.shape[0]:
        raise ContractError(
            f"alpha length {alpha.shape[0]} != number of training rows {Xa.shape[0]}"
        )
    if centering is None:
        centering = CenteringTransform.identity(Xa.shape[1])
    return KernelModel(
        alpha, centering.transform(Xa), params, 0.0, centering, provenance="external"
    )


# --- marginal likelihood and hyperparameter search -------------------------

def _log_ml_from_gram(K: np.ndarray, yc: np.ndarray, sigma2: float) -> float:
    """log p(y) = -1/2 y'(K+s2 I)^-1 y - 1/2 log|K+s2 I| - n/2 log 2pi."""
    n = K.shape[0]
    M = K + sigma2 * np.eye(n)
    try:
        factor = cho_factor(M, lower=True)
    except np.linalg.LinAlgError:
        return -np.inf
    alpha = cho_solve(factor, yc)
    logdet_half = float(np.sum(np.log(np.diag(factor[0]))))
    return -0.5 * float(yc @ alpha) - logdet_half - 0.5 * n * math.log(2.0 * math.pi)


def log_marginal_likelihood(
    X: np.ndarray,
    y: np.ndarray,
    params: RbfParams,
    sigma2: float,
    standardize: bool = True,
) -> float:
    """GP log marginal likelihood of the (optionally standardized) data."""
    Xs, yc, _ = _standardize(X, y, standardize)
    return _log_ml_from_gram(kernel_matrix(Xs, params), yc, sigma2)


def optimize_hyperparameters(
    X: np.ndarray,
    y: np.ndarray,
    ard: bool = False,
    standardize: bool = True,
) -> tuple[RbfParams, float]:
    """Select length scales and noise variance by maximum marginal likelihood.

    A coarse grid in log space (isotropic length scale over seven decades,
    noise variance over seven decades of the target variance) seeds a
    Nelder-Mead refinement in log parameters.  With ``ard=True`` a second
    refinement frees one length scale per input dimension.  Deterministic
    given the data; the returned point is never worse than the best grid
    point.
    """
    Xs, yc, _ = _standardize(X, y, standardize)
    n, m = Xs.shape
    if n < 5:
        raise ContractError(f"hyperparameter search needs n >= 5, got {n}")
    var_y = float(yc @ yc) / n
    if var_y == 0.0:
        raise ContractError("degenerate target: all y values identical")

    # Unit-length-scale squared distances; isotropic K is exp(-d0 / (2 lam^2)).
    d0 = _sq_dists(Xs, np.ones(m))

    def ll_iso(lam: float, sigma2: float) -> float:
        return _log_ml_from_gram(np.exp(-d0 / (2.0 * lam * lam)), yc, sigma2)

    lam_grid = np.logspace(-3.0, 3.0, 13)
    sig_grid = var_y * np.logspace(-6.0, 1.0, 15)
    best_ll, best_lam, best_sig = -np.inf, lam_grid[0], sig_grid[0]
    for lam in lam_grid:
        for sig in sig_grid:
            ll = ll_iso(float(lam), float(sig))
            if ll > best_ll:
                best_ll, best_lam, best_sig = ll, float(lam), float(sig)

    def neg_ll_iso(z):
        return -ll_iso(math.exp(z[0]), math.exp(z[1]))

    res = minimize(
        neg_ll_iso,
        x0=[math.log(best_lam), math.log(best_sig)],
        method="Nelder-Mead",
        options={"maxiter": 400, "xatol": 1e-4, "fatol": 1e-8},
    )
    if -res.fun > best_ll:
        best_ll = -res.fun
        best_lam, best_sig = math.exp(res.x[0]), math.exp(res.x[1])

    lambdas = np.full(m, best_lam)
    if ard and m > 1:
        sq = [_sq_dists(Xs[:, [p]], np.ones(1)) for p in range(m)]

        def neg_ll_ard(z):
            expo = np.zeros_like(d0)
            for p in range(m):
                expo += sq[p] / (2.0 * math.exp(2.0 * z[p]))
            return -_log_ml_from_gram(np.exp(-expo), yc, math.exp(z[m]))

        res = minimize(
            neg_ll_ard,
            x0=[math.log(best_lam)] * m + [math.log(best_sig)],
            method="Nelder-Mead",
            options={"maxiter": 200 * (m + 1), "xatol": 1e-4, "fatol": 1e-8},
        )
        if -res.fun > best_ll:
            lambdas = np.exp(res.x[:m])
            best_sig = math.exp(res.x[m])

    return RbfParams(lambdas), float(best_sig)


def _sq_dists(X: np.ndarray, lambdas: np.ndarray) -> np.ndarray:
    diff = X[:, None, :] / lambdas - X[None, :, :] / lambdas
    return np.einsum("ijk,ijk->ij", diff, diff)


def fit_gp(
    X: np.ndarray, y: np.ndarray, ard: bool = False, standardize: bool = True
) -> KernelModel:
    """Optimize hyperparameters, then fit; the point predictor equals a
    kernel ridge fit with the same length scales and noise variance."""
    params, sigma2 = optimize_hyperparameters(X, y, ard=ard, standardize=standardize)
    return fit_kernel_ridge(X, y, params, sigma2, standardize=standardize, provenance="gp")


# --- JSON model format ------------------------------------------------------

def kernel_to_dict(model: KernelModel) -> dict:
    return {
        "type": "kernel_rbf",
        "alpha": model.alpha.tolist(),
        "train_x": model.train_x.tolist(),
        "lambdas": model.params.lambdas.tolist(),
        "sigma2": model.sigma2,
        "x_mean": model.centering.x_mean.tolist(),
        "x_scale": model.centering.x_scale.tolist(),
        "y_mean": model.centering.y_mean,
        "provenance": model.provenance,
    }


def kernel_from_dict(obj: dict) -> KernelModel:
    if obj.get("type") != "kernel_rbf":
        raise ContractError(f"expected model type 'kernel_rbf', got {obj.get('type')!r}")
    transform = CenteringTransform(
        np.asarray(obj["x_mean"], dtype=float),
        np.asarray(obj["x_scale"], dtype=float),
        float(obj["y_mean"]),
    )
    return KernelModel(
        np.asarray(obj["alpha"], dtype=float),
        np.asarray(obj["train_x"], dtype=float),
        RbfParams(np.asarray(obj["lambdas"], dtype=float)),
        float(obj["sigma2"]),
        transform,
        obj.get("provenance", "external"),
    )
