"""Exact moments of kernel predictions under input uncertainty.

For a predictor ``y = alpha . kstar(x)`` with ``x`` random, the output mean
is ``alpha . l`` and the output variance is ``alpha' L alpha - (alpha . l)^2``,
where ``l_i`` is the expectation of ``k(x, x_i)`` and ``L_ij`` the expectation
of ``k(x, x_i) k(x, x_j)`` under the input distribution.

Both quantities have closed forms for the RBF kernel:

* multivariate Gaussian inputs: Gaussian convolution identities involving
  the determinant ``|inv(Lambda) Gamma + I|`` and solves against
  ``Lambda + Gamma`` (for ``l``) and ``Lambda/2 + Gamma`` (for ``L``);
* independent components: the kernel factorizes per dimension, so ``l`` and
  ``L`` are products of one-dimensional factors, each available in closed
  form for uniform, symmetric triangular, and Gaussian components.

An adaptive-quadrature reference, implemented independently of the closed
forms, serves as the correctness oracle for the one-dimensional factors.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.linalg import cholesky, solve_triangular
from scipy.special import erfc

from .distributions import (
    GaussianInput,
    IndependentInput,
    InputDistribution,
    Normal,
    Triangular,
    Uniform,
    UnivariateFamily,
)
from .errors import ContractError, NumericalError, OracleFailure
from .kernel_models import KernelModel
from .linear import Moments

_SQRT2 = math.sqrt(2.0)
_SQRT_PI = math.sqrt(math.pi)
_SQRT_2PI = math.sqrt(2.0 * math.pi)

# Row/column block edge for assembling L and accumulating quadratic forms.
_L_BLOCK = 2048

# Products over more dimensions than this accumulate in log space, to avoid
# underflow of long products of factors in (0, 1).
_LOG_SPACE_DIMS = 50

# Relative interval widths (b - a) / lambda below which the interval closed
# forms are evaluated by a second-order series around the midpoint instead.
# The closed forms divide a difference of nearby terms by the squared width,
# so their rounding error grows like (lambda / width)^2 (triangular) or
# lambda / width (uniform); below these thresholds the series is the more
# accurate evaluation of the same integral (error O((width/lambda)^4)).
_NARROW_UNIFORM = 1e-3
_NARROW_TRIANGULAR = 1e-2


def _phi(x):
    """Standard normal CDF on raw arrays (no validation; internal hot path)."""
    return 0.5 * erfc(-np.asarray(x, dtype=float) / _SQRT2)


def _narrow_l(xi, center: float, variance: float, lam: float):
    """Series value of E[k(X, xi)] for X tightly concentrated at ``center``."""
    z = (center - xi) / lam
    return np.exp(-0.5 * z * z) * (1.0 + (z * z - 1.0) * variance / (2.0 * lam * lam))


def _narrow_L(xi, xj, center: float, variance: float, lam: float):
    """Series value of E[k(X, xi) k(X, xj)] for X concentrated at ``center``."""
    sep = np.exp(-((xi - xj) ** 2) / (4.0 * lam * lam))
    u = center - 0.5 * (xi + xj)
    l2 = lam * lam
    base = np.exp(-u * u / l2)
    return sep * base * (1.0 + (2.0 * u * u / l2 - 1.0) * variance / l2)


def _check_interval(a: float, b: float, lam: float) -> None:
    if not (a < b):
        raise ContractError(f"interval requires a < b, got [{a}, {b}]")
    if not (lam > 0):
        raise ContractError(f"length scale must be > 0, got {lam}")


def l_uniform_1d(xi, a: float, b: float, lam: float):
    """Mean of the kernel factor against centre ``xi`` for x ~ Uniform[a, b]."""
    _check_interval(a, b, lam)
    xi = np.asarray(xi, dtype=float)
    if (b - a) <= _NARROW_UNIFORM * lam:
        out = _narrow_l(xi, 0.5 * (a + b), (b - a) ** 2 / 12.0, lam)
    else:
        out = lam * _SQRT_2PI / (b - a) * (_phi((b - xi) / lam) - _phi((a - xi) / lam))
    return float(out) if out.ndim == 0 else out


def L_uniform_1d(xi, xj, a: float, b: float, lam: float):
    """Mean of the product of kernel factors at ``xi`` and ``xj``, uniform input."""
    _check_interval(a, b, lam)
    xi = np.asarray(xi, dtype=float)
    xj = np.asarray(xj, dtype=float)
    if (b - a) <= _NARROW_UNIFORM * lam:
        out = _narrow_L(xi, xj, 0.5 * (a + b), (b - a) ** 2 / 12.0, lam)
    else:
        mid = 0.5 * (xi + xj)
        s = lam / _SQRT2
        out = (
            lam * _SQRT_PI / (b - a)
            * np.exp(-((xi - xj) ** 2) / (4.0 * lam * lam))
            * (_phi((b - mid) / s) - _phi((a - mid) / s))
        )
    return float(out) if out.ndim == 0 else out


def l_triangular_1d(xi, a: float, b: float, lam: float):
    """Mean of the kernel factor for x ~ symmetric triangular on [a, b]."""
    _check_interval(a, b, lam)
    xi = np.asarray(xi, dtype=float)
    c = 0.5 * (a + b)
    if (b - a) <= _NARROW_TRIANGULAR * lam:
        out = _narrow_l(xi, c, (b - a) ** 2 / 24.0, lam)
        return float(out) if out.ndim == 0 else out
    two_l2 = 2.0 * lam * lam
    exp_part = (
        np.exp(-((a - xi) ** 2) / two_l2)
        + np.exp(-((b - xi) ** 2) / two_l2)
        - 2.0 * np.exp(-((c - xi) ** 2) / two_l2)
    )
    phi_part = (
        (a - xi) * _phi((a - xi) / lam)
        + (b - xi) * _phi((b - xi) / lam)
        - (a + b - 2.0 * xi) * _phi((c - xi) / lam)
    )
    out = 4.0 * lam * lam / (b - a) ** 2 * (exp_part + _SQRT_2PI / lam * phi_part)
    return float(out) if out.ndim == 0 else out


def L_triangular_1d(xi, xj, a: float, b: float, lam: float):
    """Mean of the product of kernel factors, symmetric triangular input."""
    _check_interval(a, b, lam)
    xi = np.asarray(xi, dtype=float)
    xj = np.asarray(xj, dtype=float)
    c = 0.5 * (a + b)
    if (b - a) <= _NARROW_TRIANGULAR * lam:
        out = _narrow_L(xi, xj, c, (b - a) ** 2 / 24.0, lam)
        return float(out) if out.ndim == 0 else out
    mid = 0.5 * (xi + xj)
    l2 = lam * lam
    s = lam / _SQRT2
    exp_part = (
        np.exp(-((a - mid) ** 2) / l2)
        + np.exp(-((b - mid) ** 2) / l2)
        - 2.0 * np.exp(-((c - mid) ** 2) / l2)
    )
    phi_part = (
        (a - mid) * _phi((a - mid) / s)
        + (b - mid) * _phi((b - mid) / s)
        - (a + b - 2.0 * mid) * _phi((c - mid) / s)
    )
    out = (
        2.0 * l2 / (b - a) ** 2
        * np.exp(-((xi - xj) ** 2) / (4.0 * l2))
        * (exp_part + 2.0 * _SQRT_PI / lam * phi_part)
    )
    return float(out) if out.ndim == 0 else out


def l_normal_1d(xi, mean: float, variance: float, lam: float):
    """Mean of the kernel factor for x ~ Normal(mean, variance)."""
    if not (variance >= 0):
        raise ContractError(f"variance must be >= 0, got {variance}")
    if not (lam > 0):
        raise ContractError(f"length scale must be > 0, got {lam}")
    xi = np.asarray(xi, dtype=float)
    l2 = lam * lam
    out = (1.0 + variance / l2) ** -0.5 * np.exp(
        -((mean - xi) ** 2) / (2.0 * (l2 + variance))
    )
    return float(out) if out.ndim == 0 else out


def L_normal_1d(xi, xj, mean: float, variance: float, lam: float):
    """Mean of the product of kernel factors, Gaussian input."""
    if not (variance >= 0):
        raise ContractError(f"variance must be >= 0, got {variance}")
    if not (lam > 0):
        raise ContractError(f"length scale must be > 0, got {lam}")
    xi = np.asarray(xi, dtype=float)
    xj = np.asarray(xj, dtype=float)
    mid = 0.5 * (xi + xj)
    l2 = lam * lam
    out = (1.0 + 2.0 * variance / l2) ** -0.5 * np.exp(
        -0.5
        * (
            (mean - mid) ** 2 / (0.5 * l2 + variance)
            + (xi - xj) ** 2 / (2.0 * l2)
        )
    )
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class MomentVectors:
    """First and second moments of the kernel vector under the input law."""

    l: np.ndarray
    L: np.ndarray

    def __post_init__(self):
        l = np.atleast_1d(np.asarray(self.l, dtype=float))
        L = np.atleast_2d(np.asarray(self.L, dtype=float))
        n = l.shape[0]
        if L.shape != (n, n):
            raise ContractError(f"L shape {L.shape} does not match l length {n}")
        object.__setattr__(self, "l", l)
        object.__setattr__(self, "L", L)


# --- multivariate Gaussian inputs -------------------------------------------

class _GaussianParts:
    """Precomputed pieces for l and blocked L under a Gaussian input.

    All quantities live in the model's fitted coordinates.  ``block(I, J)``
    returns the L sub-matrix for row slice I and column slice J.
    """

    def __init__(self, train_x: np.ndarray, lambdas: np.ndarray, mu: np.ndarray, gamma: np.ndarray):
        m = train_x.shape[1]
        lam2 = lambdas**2
        inv_sqrt_lam = 1.0 / lambdas
        sym = gamma * np.outer(inv_sqrt_lam, inv_sqrt_lam)  # Lambda^-1/2 Gamma Lambda^-1/2
        try:
            # Determinants via Cholesky log-determinants of the symmetrized
            # products; never materialize an inverse.
            chol1 = cholesky(sym + np.eye(m), lower=True)
            chol2 = cholesky(2.0 * sym + np.eye(m), lower=True)
            root_l = cholesky(np.diag(lam2) + gamma, lower=True)
            root_L = cholesky(np.diag(0.5 * lam2) + gamma, lower=True)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("covariance plus length-scale matrix is not positive definite") from exc
        self.pref_l = math.exp(-float(np.sum(np.log(np.diag(chol1)))))
        self.pref_L = math.exp(-float(np.sum(np.log(np.diag(chol2)))))
        U = (mu - train_x).T  # m x n
        w = solve_triangular(root_l, U, lower=True)
        self.l = self.pref_l * np.exp(-0.5 * np.einsum("ij,ij->j", w, w))
        self.W = solve_triangular(root_L, U, lower=True)  # m x n
        self.q = np.einsum("ij,ij->j", self.W, self.W)
        self.V = train_x / lambdas
        self.vsq = np.einsum("ij,ij->i", self.V, self.V)

    def block(self, rows: slice, cols: slice) -> np.ndarray:
        g = self.W[:, rows].T @ self.W[:, cols]
        vv = self.V[rows] @ self.V[cols].T
        expo = (
            -(self.q[rows][:, None] + self.q[cols][None, :] + 2.0 * g) / 8.0
            - (self.vsq[rows][:, None] + self.vsq[cols][None, :] - 2.0 * vv) / 4.0
        )
        return self.pref_L * np.exp(expo)


def moment_vectors_gaussian(model: KernelModel, mu: np.ndarray, gamma: np.ndarray) -> MomentVectors:
    """l and L for a Gaussian input, given in the model's fitted coordinates.

    The upper triangle of L is computed block-wise and mirrored, so the
    result is exactly symmetric.
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    gamma = np.atleast_2d(np.asarray(gamma, dtype=float))
    if mu.shape[0] != model.dim or gamma.shape != (model.dim, model.dim):
        raise ContractError("mu/gamma dimensions do not match the model")
    parts = _GaussianParts(model.train_x, model.params.lambdas, mu, gamma)
    L = _assemble_symmetric(parts.block, model.n_train)
    return MomentVectors(parts.l, L)


# --- independent inputs ------------------------------------------------------

def _factor_l_1d(fam: UnivariateFamily, centers: np.ndarray, lam: float) -> np.ndarray:
    if isinstance(fam, Uniform):
        return l_uniform_1d(centers, fam.a, fam.b, lam)
    if isinstance(fam, Triangular):
        return l_triangular_1d(centers, fam.a, fam.b, lam)
    if isinstance(fam, Normal):
        return l_normal_1d(centers, fam.mean, fam.variance, lam)
    raise ContractError(f"unsupported component family: {type(fam).__name__}")


def _factor_L_1d(fam: UnivariateFamily, ci, cj, lam: float) -> np.ndarray:
    if isinstance(fam, Uniform):
        return L_uniform_1d(ci, cj, fam.a, fam.b, lam)
    if isinstance(fam, Triangular):
        return L_triangular_1d(ci, cj, fam.a, fam.b, lam)
    if isinstance(fam, Normal):
        return L_normal_1d(ci, cj, fam.mean, fam.variance, lam)
    raise ContractError(f"unsupported component family: {type(fam).__name__}")


class _IndependentParts:
    """Per-dimension factor products for l and blocked L (independent input)."""

    def __init__(self, train_x: np.ndarray, lambdas: np.ndarray, comps: tuple):
        self.train_x = train_x
        self.lambdas = lambdas
        self.comps = comps
        self.log_space = len(comps) > _LOG_SPACE_DIMS
        factors = [
            _factor_l_1d(fam, train_x[:, p], float(lambdas[p]))
            for p, fam in enumerate(comps)
        ]
        if self.log_space:
            with np.errstate(divide="ignore"):
                self.l = np.exp(sum(np.log(f) for f in factors))
        else:
            self.l = math.prod(factors) if factors else np.ones(train_x.shape[0])

    def block(self, rows: slice, cols: slice) -> np.ndarray:
        shape = (self.train_x[rows].shape[0], self.train_x[cols].shape[0])
        if self.log_space:
            acc = np.zeros(shape)
            with np.errstate(divide="ignore"):
                for p, fam in enumerate(self.comps):
                    ci = self.train_x[rows, p][:, None]
                    cj = self.train_x[cols, p][None, :]
                    acc += np.log(_factor_L_1d(fam, ci, cj, float(self.lambdas[p])))
            return np.exp(acc)
        acc = np.ones(shape)
        for p, fam in enumerate(self.comps):
            ci = self.train_x[rows, p][:, None]
            cj = self.train_x[cols, p][None, :]
            acc *= _factor_L_1d(fam, ci, cj, float(self.lambdas[p]))
        return acc


def moment_vectors_independent(model: KernelModel, comps: IndependentInput) -> MomentVectors:
    """l and L for independent components, given in fitted coordinates."""
    if comps.dim != model.dim:
        raise ContractError(f"input dimension {comps.dim} != model dimension {model.dim}")
    parts = _IndependentParts(model.train_x, model.params.lambdas, comps.components)
    L = _assemble_symmetric(parts.block, model.n_train)
    return MomentVectors(parts.l, L)


# --- assembly and propagation ------------------------------------------------

def _assemble_symmetric(block_fn, n: int) -> np.ndarray:
    L = np.empty((n, n))
    edges = list(range(0, n, _L_BLOCK)) + [n]
    for bi in range(len(edges) - 1):
        ri = slice(edges[bi], edges[bi + 1])
        for bj in range(bi, len(edges) - 1):
            cj = slice(edges[bj], edges[bj + 1])
            blk = block_fn(ri, cj)
            if bi == bj:
                blk = np.triu(blk) + np.triu(blk, 1).T
                L[ri, cj] = blk
            else:
                L[ri, cj] = blk
                L[cj, ri] = blk.T
    return L


def _quadratic_form(alpha: np.ndarray, block_fn, n: int) -> float:
    """alpha' L alpha accumulated block-wise in a fixed order."""
    total = 0.0
    edges = list(range(0, n, _L_BLOCK)) + [n]
    for bi in range(len(edges) - 1):
        ri = slice(edges[bi], edges[bi + 1])
        for bj in range(bi, len(edges) - 1):
            cj = slice(edges[bj], edges[bj + 1])
            term = float(alpha[ri] @ block_fn(ri, cj) @ alpha[cj])
            total += term if bi == bj else 2.0 * term
    return total


def _scaled_family(fam: UnivariateFamily, center: float, scale: float) -> UnivariateFamily:
    """Image of a component family under x -> (x - center) / scale."""
    if isinstance(fam, Uniform):
        return Uniform((fam.a - center) / scale, (fam.b - center) / scale)
    if isinstance(fam, Triangular):
        return Triangular((fam.a - center) / scale, (fam.b - center) / scale)
    if isinstance(fam, Normal):
        return Normal((fam.mean - center) / scale, fam.variance / scale**2)
    raise ContractError(f"unsupported component family: {type(fam).__name__}")


def propagate_kernel(model: KernelModel, d: InputDistribution) -> Moments:
    """Exact output mean and variance of the kernel predictor under ``d``.

    The distribution is mapped into the model's fitted coordinates first.
    The output family is left unspecified: only the two moments are exact.
    """
    ct = model.centering
    if isinstance(d, GaussianInput):
        if d.dim != model.dim:
            raise ContractError(f"input dimension {d.dim} != model dimension {model.dim}")
        mu_c = ct.transform(d.mu)
        gamma_c = ct.transform_covariance(d.gamma)
        parts = _GaussianParts(model.train_x, model.params.lambdas, mu_c, gamma_c)
    elif isinstance(d, IndependentInput):
        if d.dim != model.dim:
            raise ContractError(f"input dimension {d.dim} != model dimension {model.dim}")
        comps = tuple(
            _scaled_family(fam, float(ct.x_mean[p]), float(ct.x_scale[p]))
            for p, fam in enumerate(d.components)
        )
        parts = _IndependentParts(model.train_x, model.params.lambdas, comps)
    else:
        raise ContractError(f"unsupported distribution: {type(d).__name__}")
    s1 = float(model.alpha @ parts.l)
    s2 = _quadratic_form(model.alpha, parts.block, model.n_train)
    return Moments(s1 + ct.y_mean, s2 - s1 * s1)


# --- quadrature oracle -------------------------------------------------------

def quadrature_reference(
    weight: UnivariateFamily, centers, lam: float, tol: float = 1e-12
) -> float:
    """Adaptive-quadrature value of the weighted kernel-product integral.

    Integrates ``prod_c exp(-(x - c)^2 / (2 lam^2)) * pdf(x)`` to the given
    absolute tolerance.  Intentionally shares nothing with the closed forms
    beyond the kernel expression itself, so it can serve as an independent
    oracle: the densities are written out inline and the integration is
    delegated to adaptive Gauss-Kronrod quadrature.
    """
    if not (lam > 0):
        raise ContractError(f"length scale must be > 0, got {lam}")
    cs = [float(c) for c in centers]

    def kernel_product(x: float) -> float:
        return math.prod(math.exp(-((x - c) ** 2) / (2.0 * lam * lam)) for c in cs)

    if isinstance(weight, Uniform):
        a, b = weight.a, weight.b
        height = 1.0 / (b - a)
        segments = [(a, b, lambda x: kernel_product(x) * height)]
    elif isinstance(weight, Triangular):
        a, b = weight.a, weight.b
        mid = 0.5 * (a + b)
        norm = 4.0 / (b - a) ** 2

        def up(x: float) -> float:
            return kernel_product(x) * norm * (x - a)

        def down(x: float) -> float:
            return kernel_product(x) * norm * (b - x)

        segments = [(a, mid, up), (mid, b, down)]
    elif isinstance(weight, Normal):
        mu_w, var_w = weight.mean, weight.variance
        dens_norm = 1.0 / math.sqrt(2.0 * math.pi * var_w)

        def dens(x: float) -> float:
            return kernel_product(x) * dens_norm * math.exp(-((x - mu_w) ** 2) / (2.0 * var_w))

        cuts = sorted(set(cs + [mu_w]))
        bounds = [-np.inf] + cuts + [np.inf]
        segments = [(bounds[i], bounds[i + 1], dens) for i in range(len(bounds) - 1)]
    else:
        raise ContractError(f"unsupported weight family: {type(weight).__name__}")

    total = 0.0
    err = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for lo, hi, fn in segments:
            if lo == hi:
                continue
            pts = sorted(c for c in cs if lo < c < hi) or None
            if not (np.isfinite(lo) and np.isfinite(hi)):
                pts = None
            val, est = quad(fn, lo, hi, points=pts, epsabs=0.1 * tol, epsrel=1e-12, limit=300)
            total += val
            err += est
    if err > tol:
        raise OracleFailure(
            f"quadrature error estimate {err:.3e} exceeds requested tolerance {tol:.1e}"
        )
    return total
