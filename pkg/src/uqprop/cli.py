"""Command-line surface: fit, propagate, validate, mc, bench.

All outputs are deterministic for fixed seeds: JSON is written with sorted
keys and shortest round-trip float encoding, CSV numbers use the same
encoding, and no timestamps are embedded.  The UQPROP_THREADS environment
variable caps worker threads for per-point fan-out; results do not depend
on it.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from .distributions import (
    GaussianInput,
    InputDistribution,
    distribution_from_dict,
    rng_stream,
)
from .errors import ContractError, NumericalError
from .kernel_models import (
    KernelModel,
    fit_gp,
    fit_kernel_ridge,
    kernel_from_dict,
    kernel_to_dict,
    optimize_hyperparameters,
    predict_kernel,
)
from .kernels import RbfParams
from .linear import (
    LinearModel,
    Moments,
    fit_ols,
    fit_ridge,
    linear_from_dict,
    linear_to_dict,
    predict_linear,
    propagate_linear,
)
from .mc import MCEstimate, mc_propagate, kappa_rmse, thread_count
from .propagation import propagate_kernel


@dataclass(frozen=True)
class Dataset:
    """Feature matrix, target vector, and feature column names."""

    features: np.ndarray
    target: np.ndarray
    column_names: tuple

    def __post_init__(self):
        feats = np.atleast_2d(np.asarray(self.features, dtype=float))
        target = np.asarray(self.target, dtype=float).ravel()
        if feats.shape[0] != target.shape[0] or feats.shape[0] < 1:
            raise ContractError("features and target must have the same positive row count")
        if not np.all(np.isfinite(feats)) or not np.all(np.isfinite(target)):
            raise ContractError("dataset contains non-finite entries")
        if len(self.column_names) != feats.shape[1]:
            raise ContractError("column_names length does not match feature count")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "column_names", tuple(self.column_names))


def ingest_csv(path, target_column: str) -> Dataset:
    """Parse a headed CSV of doubles, extracting the target column by name.

    No centering or scaling happens here; that is the fit step's job.
    Non-numeric or non-finite cells are rejected with their location.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ContractError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if target_column not in header:
            raise ContractError(f"{path}: no column named {target_column!r} in header {header}")
        t_idx = header.index(target_column)
        rows = []
        for r, record in enumerate(reader, start=1):
            if len(record) != len(header):
                raise ContractError(f"{path}: row {r} has {len(record)} cells, expected {len(header)}")
            values = []
            for c, cell in enumerate(record):
                try:
                    v = float(cell)
                except ValueError:
                    raise ContractError(
                        f"{path}: non-numeric value {cell.strip()!r} at row {r}, column {header[c]!r}"
                    ) from None
                if not math.isfinite(v):
                    raise ContractError(
                        f"{path}: non-finite value {cell.strip()!r} at row {r}, column {header[c]!r}"
                    )
                values.append(v)
            rows.append(values)
    if not rows:
        raise ContractError(f"{path}: no data rows")
    data = np.array(rows, dtype=float)
    mask = np.arange(data.shape[1]) != t_idx
    names = tuple(h for i, h in enumerate(header) if i != t_idx)
    return Dataset(data[:, mask], data[:, t_idx], names)


def write_dataset_csv(ds: Dataset, path) -> None:
    """Write a dataset back out with shortest round-trip number formatting."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(ds.column_names) + ["y"])
        for row, t in zip(ds.features, ds.target):
            writer.writerow([repr(float(v)) for v in row] + [repr(float(t))])


# --- model and descriptor files ----------------------------------------------

def save_model(model, path) -> None:
    if isinstance(model, LinearModel):
        obj = linear_to_dict(model)
    elif isinstance(model, KernelModel):
        obj = kernel_to_dict(model)
    else:
        raise ContractError(f"unsupported model type: {type(model).__name__}")
    _write_json(path, obj)


def load_model(path):
    obj = _read_json(path)
    kind = obj.get("type")
    if kind == "linear":
        return linear_from_dict(obj)
    if kind == "kernel_rbf":
        return kernel_from_dict(obj)
    raise ContractError(f"{path}: unknown model type {kind!r}")


def parse_descriptors(obj) -> list[InputDistribution]:
    """One or many input-distribution descriptors.

    Accepts a single descriptor object, a JSON array of descriptors, or a
    gaussian descriptor with a shared 'gamma' and per-point 'mus'.
    """
    if isinstance(obj, list):
        return [distribution_from_dict(o) for o in obj]
    if isinstance(obj, dict) and obj.get("type") == "gaussian" and "mus" in obj:
        gamma = np.asarray(obj["gamma"], dtype=float)
        return [GaussianInput(np.asarray(mu, dtype=float), gamma) for mu in obj["mus"]]
    return [distribution_from_dict(obj)]


def load_descriptors(path) -> list[InputDistribution]:
    return parse_descriptors(_read_json(path))


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ContractError(f"{path}: invalid JSON ({exc})") from None


def _write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(["" if v is None else (repr(float(v)) if isinstance(v, float) else v) for v in row])


def _propagate_one(model, dist) -> tuple[float, float, str]:
    if isinstance(model, LinearModel):
        mom = propagate_linear(model, dist)
    else:
        mom = propagate_kernel(model, dist)
    return mom.mean, mom.variance, mom.family


def _propagate_all(model, dists):
    workers = thread_count()
    if workers > 1 and len(dists) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda d: _propagate_one(model, d), dists))
    return [_propagate_one(model, d) for d in dists]


# --- commands ------------------------------------------------------------------

def _parse_lambdas(raw: str, m: int) -> RbfParams:
    values = [float(v) for v in raw.split(",") if v.strip()]
    if len(values) == 1:
        return RbfParams.isotropic(values[0], m)
    if len(values) != m:
        raise ContractError(f"--lambda needs 1 or {m} values, got {len(values)}")
    return RbfParams(np.array(values))


def _split_dataset(ds: Dataset, fraction: float, seed: int):
    if not (0.0 < fraction < 1.0):
        raise ContractError(f"--split must be in (0, 1), got {fraction}")
    n = ds.target.shape[0]
    n_test = max(1, int(round(fraction * n)))
    if n_test >= n:
        raise ContractError("--split leaves no training data")
    perm = rng_stream(seed, 0).permutation(n)
    test, train = perm[:n_test], perm[n_test:]
    return train, test


def _drop_extrapolation(ds: Dataset, train_idx, test_idx):
    Xtr, ytr = ds.features[train_idx], ds.target[train_idx]
    lo, hi = Xtr.min(axis=0), Xtr.max(axis=0)
    keep = []
    for i in test_idx:
        inside_x = bool(np.all(ds.features[i] >= lo) and np.all(ds.features[i] <= hi))
        inside_y = ytr.min() <= ds.target[i] <= ytr.max()
        if inside_x and inside_y:
            keep.append(i)
    return np.array(keep, dtype=int)


def _rmse(pred: np.ndarray, truth: np.ndarray) -> float:
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def cmd_fit(args) -> int:
    ds = ingest_csv(args.data, args.target)
    train_idx = np.arange(ds.target.shape[0])
    test_idx = np.array([], dtype=int)
    if args.split is not None:
        train_idx, test_idx = _split_dataset(ds, args.split, args.seed)
        if args.drop_extrapolation and test_idx.size:
            test_idx = _drop_extrapolation(ds, train_idx, test_idx)
    X, y = ds.features[train_idx], ds.target[train_idx]

    if args.model == "ols":
        model = fit_ols(X, y)
    elif args.model == "ridge":
        if args.sigma2 is None:
            raise ContractError("--sigma2 is required for ridge")
        if args.sigma2 < 0:
            raise ContractError(f"--sigma2 must be >= 0, got {args.sigma2}")
        model = fit_ridge(X, y, args.sigma2)
    elif args.model == "kernel_ridge":
        if args.optimize_hyperparams:
            params, sigma2 = optimize_hyperparameters(X, y)
        else:
            if args.lam is None or args.sigma2 is None:
                raise ContractError(
                    "kernel_ridge needs --lambda and --sigma2, or --optimize-hyperparams"
                )
            if args.sigma2 < 0:
                raise ContractError(f"--sigma2 must be >= 0, got {args.sigma2}")
            params, sigma2 = _parse_lambdas(args.lam, X.shape[1]), args.sigma2
        model = fit_kernel_ridge(X, y, params, sigma2)
    elif args.model == "gp":
        model = fit_gp(X, y)
    else:
        raise ContractError(f"unknown model kind {args.model!r}")

    predict = predict_linear if isinstance(model, LinearModel) else predict_kernel
    print(f"train_rmse={_rmse(predict(model, X), y)!r}")
    if test_idx.size:
        print(f"holdout_rmse={_rmse(predict(model, ds.features[test_idx]), ds.target[test_idx])!r}")
        print(f"holdout_points={test_idx.size}")
    if args.out:
        save_model(model, args.out)
    return 0


def cmd_propagate(args) -> int:
    model = load_model(args.model)
    dists = load_descriptors(args.dist)
    results = _propagate_all(model, dists)
    points = [
        {"point": i, "mean": mean, "variance": var, "family": family}
        for i, (mean, var, family) in enumerate(results)
    ]
    if args.format == "json":
        _emit_json(args.out, {"points": points})
    else:
        rows = [(p["point"], p["mean"], p["variance"], p["family"]) for p in points]
        _emit_csv(args.out, ["point", "mean", "variance", "family"], rows)
    return 0


def cmd_mc(args) -> int:
    model = load_model(args.model)
    dists = load_descriptors(args.dist)
    samples = _parse_samples(args.samples)
    points = []
    for i, dist in enumerate(dists):
        for T in samples:
            est = mc_propagate(model, dist, T, args.seed)
            points.append(
                {
                    "point": i,
                    "samples": est.samples,
                    "seed": est.seed,
                    "mean": est.mean,
                    "variance": est.variance,
                    "se_mean": est.se_mean,
                    "se_variance": est.se_variance,
                }
            )
    if args.format == "json":
        _emit_json(args.out, {"points": points})
    else:
        rows = [
            (p["point"], p["samples"], p["mean"], p["variance"], p["se_mean"], p["se_variance"])
            for p in points
        ]
        _emit_csv(
            args.out,
            ["point", "samples", "mean", "variance", "se_mean", "se_variance"],
            rows,
        )
    return 0


def cmd_validate(args) -> int:
    model = load_model(args.model)
    dists = load_descriptors(args.dist)
    samples = _parse_samples(args.samples)
    analytical = [_propagate_one(model, d) for d in dists]
    analytical_moments = [Moments(m, v, f) for (m, v, f) in analytical]

    detail = []
    kappa_rows = []
    for T in samples:
        estimates = []
        for i, dist in enumerate(dists):
            if T == 0:
                # Analytical-vs-analytical bypass: kappa must come out zero.
                est = MCEstimate(analytical[i][0], analytical[i][1], 0.0, 0.0, 0, args.seed)
            else:
                est = mc_propagate(model, dist, T, args.seed)
            estimates.append(est)
            detail.append(
                {
                    "point": i,
                    "samples": T,
                    "analytical_mean": analytical[i][0],
                    "analytical_variance": analytical[i][1],
                    "mc_mean": est.mean,
                    "mc_variance": est.variance,
                    "se_mean": est.se_mean,
                    "se_variance": est.se_variance,
                }
            )
        km, kv = kappa_rmse(analytical_moments, estimates)
        kappa_rows.append({"samples": T, "kappa_mean": km, "kappa_variance": kv})

    if args.format == "json":
        _emit_json(args.out, {"seed": args.seed, "points": detail, "kappa": kappa_rows})
    else:
        header = [
            "row_type", "point", "samples",
            "analytical_mean", "analytical_variance",
            "mc_mean", "mc_variance", "se_mean", "se_variance",
            "kappa_mean", "kappa_variance",
        ]
        rows = [
            ("detail", d["point"], d["samples"], d["analytical_mean"], d["analytical_variance"],
             d["mc_mean"], d["mc_variance"], d["se_mean"], d["se_variance"], None, None)
            for d in detail
        ] + [
            ("kappa", None, k["samples"], None, None, None, None, None, None,
             k["kappa_mean"], k["kappa_variance"])
            for k in kappa_rows
        ]
        _emit_csv(args.out, header, rows)
    return 0


def cmd_bench(args) -> int:
    sizes = [int(s) for s in args.sizes.split(",")]
    samples = _parse_samples(args.samples)
    report = bench_mod.run_scaling_benchmark(
        args.kind, sizes, samples, reps=args.reps, seed=args.seed, parallel=args.parallel
    )
    out = Path(args.out)
    _write_json(out.with_suffix(".json"), bench_mod.report_to_dict(report))
    _write_csv(
        out.with_suffix(".csv"),
        ["method", "size", "mc_samples", "rep", "seconds"],
        [(r.method, r.size, r.mc_samples, r.rep, r.seconds) for r in report.rows],
    )
    _write_plot_data(out.with_suffix(".dat"), report)
    for s in report.slopes:
        label = s.method if s.mc_samples is None else f"{s.method}[T={s.mc_samples}]"
        print(f"slope {label} = {s.slope!r}")
    return 0


def _write_plot_data(path, report) -> None:
    """Gnuplot-style blocks: one '# series:' block of 'size seconds' per method."""
    med = report.medians
    series: dict = {}
    for (method, samples, size), sec in med.items():
        series.setdefault((method, samples), []).append((size, sec))
    with open(path, "w") as fh:
        for (method, samples), pts in sorted(series.items(), key=lambda kv: (kv[0][0], kv[0][1] or 0)):
            label = method if samples is None else f"{method} T={samples}"
            fh.write(f"# series: {label}\n")
            for size, sec in sorted(pts):
                fh.write(f"{size} {sec!r}\n")
            fh.write("\n")


def _parse_samples(raw: str) -> list[int]:
    try:
        values = [int(v) for v in str(raw).split(",") if v.strip()]
    except ValueError:
        raise ContractError(f"--samples must be a comma-separated list of integers, got {raw!r}") from None
    if not values or any(v < 0 for v in values):
        raise ContractError("--samples values must be non-negative integers")
    return values


def _emit_json(out, obj) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _emit_csv(out, header, rows) -> None:
    if out:
        _write_csv(out, header, rows)
    else:
        writer = csv.writer(sys.stdout)
        writer.writerow(header)
        for row in rows:
            writer.writerow(["" if v is None else (repr(float(v)) if isinstance(v, float) else v) for v in row])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uqprop",
        description="Exact uncertainty propagation through linear and RBF-kernel regression models",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit a model from a CSV dataset and save it as JSON")
    p_fit.add_argument("--data", required=True, help="CSV file with a header row")
    p_fit.add_argument("--target", required=True, help="name of the target column")
    p_fit.add_argument("--model", required=True, choices=["ols", "ridge", "kernel_ridge", "gp"])
    p_fit.add_argument("--sigma2", type=float, default=None, help="regularization / noise variance")
    p_fit.add_argument("--lambda", dest="lam", default=None,
                       help="RBF length scale(s), comma separated, in standardized coordinates")
    p_fit.add_argument("--optimize-hyperparams", action="store_true",
                       help="select kernel hyperparameters by marginal likelihood")
    p_fit.add_argument("--split", type=float, default=None, help="holdout fraction in (0, 1)")
    p_fit.add_argument("--drop-extrapolation", action="store_true",
                       help="drop holdout points outside the training range")
    p_fit.add_argument("--seed", type=int, default=0)
    p_fit.add_argument("--out", default=None, help="path for the model JSON")
    p_fit.set_defaults(func=cmd_fit)

    p_prop = sub.add_parser("propagate", help="analytical mean/variance per input descriptor")
    p_prop.add_argument("--model", required=True)
    p_prop.add_argument("--dist", required=True, help="distribution descriptor JSON")
    p_prop.add_argument("--out", default=None)
    p_prop.add_argument("--format", choices=["csv", "json"], default="json")
    p_prop.set_defaults(func=cmd_propagate)

    p_mc = sub.add_parser("mc", help="Monte Carlo estimate per input descriptor")
    p_mc.add_argument("--model", required=True)
    p_mc.add_argument("--dist", required=True)
    p_mc.add_argument("--samples", required=True, help="comma-separated sample counts")
    p_mc.add_argument("--seed", type=int, default=0)
    p_mc.add_argument("--out", default=None)
    p_mc.add_argument("--format", choices=["csv", "json"], default="json")
    p_mc.set_defaults(func=cmd_mc)

    p_val = sub.add_parser("validate", help="analytical vs Monte Carlo RMSE table")
    p_val.add_argument("--model", required=True)
    p_val.add_argument("--dist", required=True)
    p_val.add_argument("--samples", required=True,
                       help="comma-separated sample counts; 0 compares analytical to itself")
    p_val.add_argument("--seed", type=int, default=0)
    p_val.add_argument("--out", default=None)
    p_val.add_argument("--format", choices=["csv", "json"], default="json")
    p_val.set_defaults(func=cmd_validate)

    p_bench = sub.add_parser("bench", help="complexity-scaling benchmark")
    p_bench.add_argument("--kind", required=True, choices=["linear", "kernel"])
    p_bench.add_argument("--sizes", default="100,317,1000,3163,10000",
                         help="comma-separated problem sizes, ascending")
    p_bench.add_argument("--samples", default="100,1000,10000",
                         help="comma-separated Monte Carlo sample counts")
    p_bench.add_argument("--reps", type=int, default=5)
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--parallel", action="store_true",
                         help="allow multi-threaded BLAS during timing")
    p_bench.add_argument("--out", required=True, help="output path prefix")
    p_bench.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ContractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
