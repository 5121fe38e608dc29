"""RBF kernel evaluation and Gram-matrix assembly.

The kernel is ``exp(-0.5 * sum_p (x_p - x2_p)^2 / lambda_p^2)`` with one
positive length scale per input dimension; an isotropic kernel is simply the
special case of equal length scales.  Pairwise distances are computed from
explicit coordinate differences (never the expanded dot-product identity), so
Gram matrices are exactly symmetric with an exactly unit diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError

# Row-block element budget for pairwise evaluation (bounds peak memory).
_BLOCK_ELEMS = 2**23


@dataclass(frozen=True)
class RbfParams:
    """Per-dimension positive length scales of the RBF kernel."""

    lambdas: np.ndarray

    def __post_init__(self):
        lam = np.atleast_1d(np.asarray(self.lambdas, dtype=float))
        if lam.ndim != 1:
            raise ContractError("lambdas must be a vector")
        if not np.all(np.isfinite(lam)) or np.any(lam <= 0):
            raise ContractError("length scales must be finite and > 0")
        lam = lam.copy()
        lam.flags.writeable = False
        object.__setattr__(self, "lambdas", lam)

    @property
    def dim(self) -> int:
        return self.lambdas.shape[0]

    @classmethod
    def isotropic(cls, lam: float, m: int) -> "RbfParams":
        return cls(np.full(m, float(lam)))


def _check_dim(vec: np.ndarray, p: RbfParams, name: str) -> np.ndarray:
    v = np.atleast_1d(np.asarray(vec, dtype=float))
    if v.shape[-1] != p.dim:
        raise ContractError(f"{name} has dimension {v.shape[-1]}, expected {p.dim}")
    return v


def rbf(x, x2, p: RbfParams) -> float:
    """Kernel value in (0, 1]; equals 1 iff the inputs coincide.

    Evaluated in scaled coordinates (x / lambda), the same convention the
    batched paths use, so single and batched evaluations agree exactly.
    """
    u = _check_dim(x, p, "x")
    v = _check_dim(x2, p, "x2")
    d = u / p.lambdas - v / p.lambdas
    return float(np.exp(-0.5 * np.dot(d, d)))


def _cross_sq_dist(A: np.ndarray, B: np.ndarray, lambdas: np.ndarray) -> np.ndarray:
    """Scaled squared distances sum_p (a_p - b_p)^2 / lambda_p^2, blocked over rows of A."""
    a = A / lambdas
    b = B / lambdas
    na, m = a.shape
    nb = b.shape[0]
    out = np.empty((na, nb))
    step = max(1, _BLOCK_ELEMS // max(nb * m, 1))
    for start in range(0, na, step):
        stop = min(start + step, na)
        diff = a[start:stop, None, :] - b[None, :, :]
        out[start:stop] = np.einsum("ijk,ijk->ij", diff, diff)
    return out


def kernel_matrix(X: np.ndarray, p: RbfParams) -> np.ndarray:
    """Gram matrix of pairwise kernel values over the rows of ``X``."""
    Xa = np.atleast_2d(np.asarray(X, dtype=float))
    if Xa.shape[1] != p.dim:
        raise ContractError(f"X has {Xa.shape[1]} columns, expected {p.dim}")
    return np.exp(-0.5 * _cross_sq_dist(Xa, Xa, p.lambdas))


def kstar(X: np.ndarray, xstar, p: RbfParams) -> np.ndarray:
    """Kernel values between one test point and every row of ``X``."""
    xs = _check_dim(xstar, p, "xstar")
    if xs.ndim != 1:
        raise ContractError("xstar must be a single vector; use kstar_matrix for batches")
    Xa = np.atleast_2d(np.asarray(X, dtype=float))
    d = Xa / p.lambdas - xs / p.lambdas
    return np.exp(-0.5 * np.einsum("ij,ij->i", d, d))


def kstar_matrix(X: np.ndarray, Xstar: np.ndarray, p: RbfParams) -> np.ndarray:
    """Kernel values for a batch of test points: entry (q, i) = k(xstar_q, x_i)."""
    Xa = np.atleast_2d(np.asarray(X, dtype=float))
    Q = np.atleast_2d(np.asarray(Xstar, dtype=float))
    if Xa.shape[1] != p.dim or Q.shape[1] != p.dim:
        raise ContractError("dimension mismatch between inputs and length scales")
    return np.exp(-0.5 * _cross_sq_dist(Q, Xa, p.lambdas))
