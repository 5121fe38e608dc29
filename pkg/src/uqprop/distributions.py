"""Input-uncertainty models and their deterministic sampler.

Two kinds of input distribution are supported:

* a multivariate Gaussian described by a mean vector and covariance matrix,
* a vector of mutually independent components, each uniform, symmetric
  triangular, or Gaussian.

Every distribution exposes its first two moments, and can be sampled
reproducibly through counter-based RNG streams keyed by ``(seed, stream)``,
so that concurrent consumers never share generator state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.special import erfc

from .errors import ContractError, NumericalError

_SQRT2 = math.sqrt(2.0)

# Relative tolerance for the positive-semi-definiteness check of covariance
# matrices, and for the eigenvalue clamp of the sampling factor.
PSD_TOL = 1e-10


def rng_stream(seed: int, stream: int = 0) -> np.random.Generator:
    """Return an independent counter-based generator for ``(seed, stream)``.

    Distinct ``(seed, stream)`` pairs index non-overlapping Philox streams,
    so parallel callers obtain reproducible, disjoint sample sequences
    regardless of scheduling.
    """
    if seed < 0 or stream < 0:
        raise ContractError("seed and stream must be non-negative")
    key = np.array([seed, stream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def std_normal_cdf(x):
    """Standard normal CDF, computed from the complementary error function.

    Accepts a scalar or an array; rejects non-finite input.  Satisfies
    ``std_normal_cdf(x) + std_normal_cdf(-x) == 1`` to within 1e-15.
    """
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ContractError("std_normal_cdf requires finite input")
    out = 0.5 * erfc(-arr / _SQRT2)
    return float(out) if np.isscalar(x) or arr.ndim == 0 else out


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Uniform:
    """Uniform distribution on ``[a, b]``."""

    a: float
    b: float

    def __post_init__(self):
        if not (self.a < self.b):
            raise ContractError(f"uniform interval requires a < b, got [{self.a}, {self.b}]")


@dataclass(frozen=True)
class Triangular:
    """Symmetric triangular distribution on ``[a, b]`` (peak at the midpoint)."""

    a: float
    b: float

    def __post_init__(self):
        if not (self.a < self.b):
            raise ContractError(f"triangular interval requires a < b, got [{self.a}, {self.b}]")


@dataclass(frozen=True)
class Normal:
    """Univariate Gaussian with the given mean and variance."""

    mean: float
    variance: float

    def __post_init__(self):
        if not (self.variance > 0):
            raise ContractError(f"normal variance must be > 0, got {self.variance}")


UnivariateFamily = Union[Uniform, Triangular, Normal]


@dataclass(frozen=True)
class GaussianInput:
    """Multivariate Gaussian input: mean vector ``mu``, covariance ``gamma``.

    ``gamma`` must be symmetric and positive semi-definite within ``PSD_TOL``.
    A factorization of ``gamma`` is computed once at construction (Cholesky
    when possible, symmetric square root with non-negative eigenvalue clamp
    otherwise) and reused by :func:`sample`.
    """

    mu: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        mu = _readonly(np.atleast_1d(np.asarray(self.mu, dtype=float)))
        gamma = np.atleast_2d(np.asarray(self.gamma, dtype=float))
        if mu.ndim != 1 or gamma.ndim != 2:
            raise ContractError("mu must be a vector and gamma a matrix")
        m = mu.shape[0]
        if gamma.shape != (m, m):
            raise ContractError(f"gamma shape {gamma.shape} does not match mu length {m}")
        if not np.all(np.isfinite(mu)) or not np.all(np.isfinite(gamma)):
            raise ContractError("mu and gamma must be finite")
        scale = max(1.0, float(np.max(np.abs(gamma))))
        if np.max(np.abs(gamma - gamma.T)) > PSD_TOL * scale:
            raise ContractError("gamma must be symmetric")
        gamma = _readonly(0.5 * (gamma + gamma.T))
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "_factor", _covariance_factor(gamma))

    @property
    def dim(self) -> int:
        return self.mu.shape[0]


def _covariance_factor(gamma: np.ndarray) -> np.ndarray:
    """Factor F with F @ F.T == gamma, validating semi-definiteness.

    Tries a plain Cholesky first (cheapest, and the common case for measured
    covariances), then a single jittered retry, then falls back to the
    symmetric square root with eigenvalues in ``[-tol, 0)`` clamped to zero.
    """
    m = gamma.shape[0]
    try:
        return np.linalg.cholesky(gamma)
    except np.linalg.LinAlgError:
        pass
    jitter = PSD_TOL * float(np.trace(gamma)) / m
    if jitter > 0.0:
        try:
            return np.linalg.cholesky(gamma + jitter * np.eye(m))
        except np.linalg.LinAlgError:
            pass
    eigvals, eigvecs = np.linalg.eigh(gamma)
    tol = PSD_TOL * max(1.0, float(eigvals[-1]))
    if eigvals[0] < -tol:
        raise NumericalError(
            f"covariance is not positive semi-definite: min eigenvalue "
            f"{eigvals[0]:.3e} below -{tol:.3e} (attempted jitter {jitter:.3e})"
        )
    root = eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))
    return root @ eigvecs.T


@dataclass(frozen=True)
class IndependentInput:
    """Input vector with mutually independent univariate components."""

    components: tuple

    def __post_init__(self):
        comps = tuple(self.components)
        if len(comps) == 0:
            raise ContractError("independent input needs at least one component")
        for c in comps:
            if not isinstance(c, (Uniform, Triangular, Normal)):
                raise ContractError(f"unsupported component family: {type(c).__name__}")
        object.__setattr__(self, "components", comps)

    @property
    def dim(self) -> int:
        return len(self.components)


InputDistribution = Union[GaussianInput, IndependentInput]


def family_moments(family: UnivariateFamily) -> tuple[float, float]:
    """Mean and variance of one univariate component."""
    if isinstance(family, Uniform):
        return 0.5 * (family.a + family.b), (family.b - family.a) ** 2 / 12.0
    if isinstance(family, Triangular):
        return 0.5 * (family.a + family.b), (family.b - family.a) ** 2 / 24.0
    if isinstance(family, Normal):
        return family.mean, family.variance
    raise ContractError(f"unsupported family: {type(family).__name__}")


def moments(d: InputDistribution) -> tuple[np.ndarray, np.ndarray]:
    """Mean vector and covariance matrix of an input distribution.

    Independent inputs yield a diagonal covariance: the uniform on
    ``[a, b]`` contributes variance ``(b - a)^2 / 12`` and the symmetric
    triangular ``(b - a)^2 / 24``.
    """
    if isinstance(d, GaussianInput):
        return d.mu, d.gamma
    if isinstance(d, IndependentInput):
        pairs = [family_moments(c) for c in d.components]
        mu = np.array([p[0] for p in pairs])
        return mu, np.diag([p[1] for p in pairs])
    raise ContractError(f"unsupported distribution: {type(d).__name__}")


def family_from_variance(kind: str, center: float, variance: float) -> UnivariateFamily:
    """Interval family centred at ``center`` with the requested variance.

    The uniform of variance v has width sqrt(12 v); the symmetric triangular
    has width sqrt(24 v).  Round-tripping through :func:`family_moments`
    recovers the variance to 1e-12.
    """
    if not (variance > 0):
        raise ContractError(f"variance must be > 0, got {variance}")
    if kind == "uniform":
        half = 0.5 * math.sqrt(12.0 * variance)
        return Uniform(center - half, center + half)
    if kind == "triangular":
        half = 0.5 * math.sqrt(24.0 * variance)
        return Triangular(center - half, center + half)
    raise ContractError(f"unknown interval family kind: {kind!r}")


def _sample_family(family: UnivariateFamily, count: int, gen: np.random.Generator) -> np.ndarray:
    if isinstance(family, Uniform):
        return family.a + (family.b - family.a) * gen.random(count)
    if isinstance(family, Triangular):
        # Inverse CDF of the symmetric triangular: one uniform draw per sample.
        u = gen.random(count)
        width = family.b - family.a
        lower = family.a + width * np.sqrt(0.5 * u)
        upper = family.b - width * np.sqrt(0.5 * (1.0 - u))
        return np.where(u <= 0.5, lower, upper)
    if isinstance(family, Normal):
        return family.mean + math.sqrt(family.variance) * gen.standard_normal(count)
    raise ContractError(f"unsupported family: {type(family).__name__}")


def sample(d: InputDistribution, count: int, seed: int, stream: int = 0) -> np.ndarray:
    """Draw ``count`` input vectors, bit-reproducible for fixed arguments.

    Returns a ``count x m`` array.  Gaussian inputs are drawn through the
    covariance factor computed at construction; independent components are
    drawn column by column from the same stream.
    """
    if count < 1:
        raise ContractError(f"count must be >= 1, got {count}")
    gen = rng_stream(seed, stream)
    if isinstance(d, GaussianInput):
        z = gen.standard_normal((count, d.dim))
        return d.mu + z @ d._factor.T
    if isinstance(d, IndependentInput):
        cols = [_sample_family(c, count, gen) for c in d.components]
        return np.column_stack(cols)
    raise ContractError(f"unsupported distribution: {type(d).__name__}")


# --- JSON descriptors ---------------------------------------------------

_FAMILY_TAGS = {"uniform": Uniform, "triangular": Triangular, "normal": Normal}


def distribution_to_dict(d: InputDistribution) -> dict:
    """Serializable descriptor; inverse of :func:`distribution_from_dict`."""
    if isinstance(d, GaussianInput):
        return {"type": "gaussian", "mu": d.mu.tolist(), "gamma": d.gamma.tolist()}
    if isinstance(d, IndependentInput):
        comps = []
        for c in d.components:
            if isinstance(c, Normal):
                comps.append({"family": "normal", "mean": c.mean, "variance": c.variance})
            else:
                tag = "uniform" if isinstance(c, Uniform) else "triangular"
                comps.append({"family": tag, "a": c.a, "b": c.b})
        return {"type": "independent", "components": comps}
    raise ContractError(f"unsupported distribution: {type(d).__name__}")


def distribution_from_dict(obj: dict) -> InputDistribution:
    """Parse a descriptor dict, rejecting unknown types and families."""
    if not isinstance(obj, dict) or "type" not in obj:
        raise ContractError("distribution descriptor must be an object with a 'type' field")
    kind = obj["type"]
    if kind == "gaussian":
        return GaussianInput(np.asarray(obj["mu"], dtype=float), np.asarray(obj["gamma"], dtype=float))
    if kind == "independent":
        comps = []
        for i, c in enumerate(obj["components"]):
            fam = c.get("family")
            if fam not in _FAMILY_TAGS:
                raise ContractError(f"component {i}: unknown family {fam!r}")
            if fam == "normal":
                comps.append(Normal(float(c["mean"]), float(c["variance"])))
            else:
                comps.append(_FAMILY_TAGS[fam](float(c["a"]), float(c["b"])))
        return IndependentInput(tuple(comps))
    raise ContractError(f"unknown distribution type {kind!r}")
