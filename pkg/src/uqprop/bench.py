"""Wall-clock scaling experiments: analytical propagation vs Monte Carlo.

Two synthetic problems are provided.  The linear one averages its inputs
under a Toeplitz-covariance Gaussian and is scaled in the input dimension;
the kernel one is a GP fitted to a noisy oscillatory test function on
[-5, 5] and is scaled in the training-set size.  Timings use the monotonic
clock, auto-scale their inner loop when a measurement would span fewer than
20 timer ticks, and report every repetition so that the fitted log-log
slopes are a pure function of the recorded rows.
"""

from __future__ import annotations

import statistics
import time
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import toeplitz
from threadpoolctl import threadpool_limits

from .distributions import GaussianInput, rng_stream
from .errors import ContractError
from .kernel_models import fit_kernel_ridge, optimize_hyperparameters
from .linear import CenteringTransform, LinearModel, propagate_linear
from .mc import mc_propagate
from .propagation import propagate_kernel

_MIN_TICKS = 20


@dataclass(frozen=True)
class BenchRow:
    """One timed repetition of one method at one problem size."""

    method: str  # "analytical" or "mc"
    size: int
    mc_samples: Optional[int]
    rep: int
    seconds: float


@dataclass(frozen=True)
class SlopeFit:
    method: str
    mc_samples: Optional[int]
    slope: float


@dataclass(frozen=True)
class BenchReport:
    rows: tuple
    slopes: tuple

    @property
    def medians(self) -> dict:
        """Median seconds per (method, mc_samples, size)."""
        return _medians(self.rows)


def synth_linear_problem(m: int) -> tuple[LinearModel, GaussianInput]:
    """Mean-of-m linear model with a Toeplitz-covariance Gaussian input.

    beta = 1/m, input mean 1/2 in every coordinate, and covariances
    0.1 * 2^-|i-j| decaying away from the diagonal (positive definite).
    """
    if m < 1:
        raise ContractError(f"m must be >= 1, got {m}")
    beta = np.full(m, 1.0 / m)
    model = LinearModel(beta, CenteringTransform.identity(m))
    mu = np.full(m, 0.5)
    gamma = toeplitz(0.1 * np.power(2.0, -np.arange(m, dtype=float)))
    return model, GaussianInput(mu, gamma)


def bachstein(x):
    """Oscillatory 1-D test function 2[x/10 + sin(4x/10) + sin(13x/10)].

    Intended domain is [-5, 5]; values outside are accepted with a warning.
    """
    xa = np.asarray(x, dtype=float)
    if np.any(np.abs(xa) > 5.0):
        warnings.warn("input outside the intended domain [-5, 5]", stacklevel=2)
    out = 2.0 * (xa / 10.0 + np.sin(0.4 * xa) + np.sin(1.3 * xa))
    return float(out) if out.ndim == 0 else out


def gen_bachstein_dataset(n: int, sigma: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """n points uniform on [-5, 5] with additive N(0, sigma^2) noise."""
    if n < 1:
        raise ContractError(f"n must be >= 1, got {n}")
    x = -5.0 + 10.0 * rng_stream(seed, 0).random(n)
    y = bachstein(x)
    if sigma != 0.0:
        y = y + sigma * rng_stream(seed, 1).standard_normal(n)
    return x.reshape(-1, 1), y


def fit_slope(points: Sequence[tuple[float, float]]) -> float:
    """Least-squares slope of log(seconds) against log(size)."""
    if len(points) < 2:
        raise ContractError("slope fit needs at least 2 points")
    sizes = np.array([p[0] for p in points], dtype=float)
    secs = np.array([p[1] for p in points], dtype=float)
    if np.any(sizes <= 0) or np.any(secs <= 0):
        raise ContractError("slope fit needs positive sizes and seconds")
    return float(np.polyfit(np.log(sizes), np.log(secs), 1)[0])


def _medians(rows: Sequence[BenchRow]) -> dict:
    groups: dict = {}
    for r in rows:
        groups.setdefault((r.method, r.mc_samples, r.size), []).append(r.seconds)
    return {k: statistics.median(v) for k, v in groups.items()}


def compute_slopes(rows: Sequence[BenchRow]) -> tuple:
    """Fitted log-log slope per (method, mc_samples) series, from medians."""
    med = _medians(rows)
    series: dict = {}
    for (method, samples, size), sec in med.items():
        series.setdefault((method, samples), []).append((size, sec))
    slopes = []
    for (method, samples), pts in sorted(series.items(), key=lambda kv: (kv[0][0], kv[0][1] or 0)):
        if len(pts) >= 2:
            slopes.append(SlopeFit(method, samples, fit_slope(sorted(pts))))
    return tuple(slopes)


def _time_call(fn) -> float:
    """One wall-clock measurement; inner loop grows until >= 20 timer ticks."""
    resolution = time.get_clock_info("perf_counter").resolution
    loops = 1
    while True:
        start = time.perf_counter()
        for _ in range(loops):
            fn()
        elapsed = time.perf_counter() - start
        if elapsed >= _MIN_TICKS * resolution:
            return elapsed / loops
        loops *= 10


def run_scaling_benchmark(
    kind: str,
    sizes: Sequence[int],
    mc_samples: Sequence[int],
    reps: int = 5,
    seed: int = 0,
    parallel: bool = False,
) -> BenchReport:
    """Time analytical propagation and Monte Carlo at each problem size.

    Kernel benchmarks fit a GP per size but freeze the hyperparameters found
    at the smallest size, so the timed quantity is propagation alone.  Runs
    on a single BLAS thread unless ``parallel`` is set, so slopes reflect
    algorithmic complexity rather than core count.
    """
    if kind not in ("linear", "kernel"):
        raise ContractError(f"kind must be 'linear' or 'kernel', got {kind!r}")
    sizes = [int(s) for s in sizes]
    if len(sizes) == 0 or any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ContractError("sizes must be non-empty and strictly ascending")
    if reps < 3:
        raise ContractError(f"reps must be >= 3, got {reps}")
    mc_samples = [int(t) for t in mc_samples]

    rows: list[BenchRow] = []
    with threadpool_limits(limits=None if parallel else 1):
        if kind == "linear":
            for m in sizes:
                model, dist = synth_linear_problem(m)
                _append_timings(rows, model, dist, m, mc_samples, reps, seed, propagate_linear)
        else:
            x0, y0 = gen_bachstein_dataset(sizes[0], 1.0, seed)
            params, sigma2 = optimize_hyperparameters(x0, y0)
            dist = GaussianInput(np.array([0.0]), np.array([[0.01]]))
            for n in sizes:
                X, y = gen_bachstein_dataset(n, 1.0, seed)
                model = fit_kernel_ridge(X, y, params, sigma2, provenance="gp")
                _append_timings(rows, model, dist, n, mc_samples, reps, seed, propagate_kernel)

    rows_t = tuple(rows)
    return BenchReport(rows_t, compute_slopes(rows_t))


def _append_timings(rows, model, dist, size, mc_samples, reps, seed, analytic_fn):
    for rep in range(reps):
        secs = _time_call(lambda: analytic_fn(model, dist))
        rows.append(BenchRow("analytical", size, None, rep, secs))
    for T in mc_samples:
        for rep in range(reps):
            secs = _time_call(lambda: mc_propagate(model, dist, T, seed))
            rows.append(BenchRow("mc", size, T, rep, secs))


# --- serialization -----------------------------------------------------------

def report_to_dict(report: BenchReport) -> dict:
    return {
        "rows": [
            {
                "method": r.method,
                "size": r.size,
                "mc_samples": r.mc_samples,
                "rep": r.rep,
                "seconds": r.seconds,
            }
            for r in report.rows
        ],
        "slopes": [
            {"method": s.method, "mc_samples": s.mc_samples, "slope": s.slope}
            for s in report.slopes
        ],
    }


def report_from_dict(obj: dict) -> BenchReport:
    rows = tuple(
        BenchRow(r["method"], int(r["size"]), r["mc_samples"], int(r["rep"]), float(r["seconds"]))
        for r in obj["rows"]
    )
    slopes = tuple(
        SlopeFit(s["method"], s["mc_samples"], float(s["slope"])) for s in obj["slopes"]
    )
    return BenchReport(rows, slopes)
