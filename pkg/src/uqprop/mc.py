"""Monte Carlo oracle for propagation, and RMSE agreement metrics.

Samples are drawn in fixed-size blocks, each block from its own RNG stream,
and per-block central moments (up to fourth order) are merged with exact
pairwise combination formulas in block order.  Results are therefore
bit-reproducible for a fixed seed, independent of how many worker threads
evaluated the blocks, and no samples are ever stored.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .distributions import InputDistribution, sample
from .errors import ContractError
from .kernel_models import KernelModel, predict_kernel
from .linear import LinearModel, Moments, predict_linear

Model = Union[LinearModel, KernelModel]

# Sample-block element budget; the row count adapts to the model width so a
# block of kernel evaluations stays within a fixed memory envelope.
_BLOCK_ELEMS = 2**23


@dataclass(frozen=True)
class MCEstimate:
    """Sample mean/variance of the propagated output with standard errors."""

    mean: float
    variance: float
    se_mean: float
    se_variance: float
    samples: int
    seed: int


def thread_count() -> int:
    """Worker-thread cap from the UQPROP_THREADS environment variable."""
    raw = os.environ.get("UQPROP_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _predict(model: Model, X: np.ndarray) -> np.ndarray:
    if isinstance(model, LinearModel):
        return predict_linear(model, X)
    if isinstance(model, KernelModel):
        return predict_kernel(model, X)
    raise ContractError(f"unsupported model type: {type(model).__name__}")


def _block_rows(model: Model) -> int:
    width = model.n_train if isinstance(model, KernelModel) else model.dim
    return max(256, min(65536, _BLOCK_ELEMS // max(width, 1)))


def _block_stats(y: np.ndarray) -> tuple[int, float, float, float, float]:
    """Count, mean, and central sums of powers 2..4 for one block."""
    n = y.shape[0]
    mean = float(y.mean())
    d = y - mean
    d2 = d * d
    return n, mean, float(d2.sum()), float((d2 * d).sum()), float((d2 * d2).sum())


def _merge(a, b):
    """Exact pairwise combination of (count, mean, M2, M3, M4) accumulators."""
    na, ma, s2a, s3a, s4a = a
    nb, mb, s2b, s3b, s4b = b
    n = na + nb
    delta = mb - ma
    mean = ma + delta * nb / n
    s2 = s2a + s2b + delta**2 * na * nb / n
    s3 = (
        s3a + s3b
        + delta**3 * na * nb * (na - nb) / n**2
        + 3.0 * delta * (na * s2b - nb * s2a) / n
    )
    s4 = (
        s4a + s4b
        + delta**4 * na * nb * (na**2 - na * nb + nb**2) / n**3
        + 6.0 * delta**2 * (na**2 * s2b + nb**2 * s2a) / n**2
        + 4.0 * delta * (na * s3b - nb * s3a) / n
    )
    return n, mean, s2, s3, s4


def mc_propagate(model: Model, d: InputDistribution, T: int, seed: int) -> MCEstimate:
    """Monte Carlo estimate of the propagated output mean and variance.

    ``se_mean`` is s/sqrt(T); ``se_variance`` uses the fourth-central-moment
    estimator of Var(s^2).  Deterministic for fixed ``(T, seed)``.
    """
    if T < 2:
        raise ContractError(f"T must be >= 2, got {T}")
    rows = _block_rows(model)
    blocks = [(b, min(rows, T - b * rows)) for b in range((T + rows - 1) // rows)]

    def run_block(spec):
        stream, count = spec
        return _block_stats(_predict(model, sample(d, count, seed, stream=stream)))

    workers = thread_count()
    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            stats = list(pool.map(run_block, blocks))
    else:
        stats = [run_block(spec) for spec in blocks]

    acc = stats[0]
    for s in stats[1:]:
        acc = _merge(acc, s)
    n, mean, s2, _, s4 = acc
    variance = s2 / (n - 1)
    m4 = s4 / n
    se_mean = math.sqrt(variance / n)
    se_variance = math.sqrt(max((m4 - variance**2 * (n - 3) / (n - 1)) / n, 0.0))
    return MCEstimate(mean, variance, se_mean, se_variance, n, seed)


def kappa_rmse(
    analytical: Sequence[Moments], mc: Sequence[MCEstimate]
) -> tuple[float, float]:
    """RMSE between analytical and Monte Carlo results over a test set.

    Returns one value for the means and one for the variances.
    """
    if len(analytical) != len(mc) or len(analytical) == 0:
        raise ContractError("analytical and MC lists must have equal nonzero length")
    dm = np.array([a.mean - e.mean for a, e in zip(analytical, mc)])
    dv = np.array([a.variance - e.variance for a, e in zip(analytical, mc)])
    return float(np.sqrt(np.mean(dm * dm))), float(np.sqrt(np.mean(dv * dv)))
