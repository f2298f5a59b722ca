"""Dataset ingestion, standardization, metrics, and the benchmark grid.

Datasets are plain (X, y) pairs loaded from bundled files or CSVs
(header row, last column is the target unless named).  Standardization
statistics are computed on the training split only; predictions are
evaluated on the original output scale.  The benchmark runner walks a
configuration grid, persists one row per (cell, seed), and resumes
interrupted runs by cell key.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np

from .models import GPModel, predict
from .training import FitSchedule, ModelConfig, fit, init_model

__all__ = [
    "Dataset",
    "Standardization",
    "BenchmarkGrid",
    "BenchmarkResult",
    "load_dataset",
    "split_standardize",
    "evaluate",
    "run_benchmark",
    "RESULT_COLUMNS",
]

BUNDLED = ("snelson",)
RESULT_COLUMNS = (
    "dataset", "kernel", "features", "mode", "M", "K", "L", "seed",
    "rmse", "nlpd", "elbo", "throughput",
)


class ParseError(ValueError):
    pass


class EvaluationError(RuntimeError):
    pass


@dataclass(frozen=True)
class Standardization:
    """Training-split statistics: inputs per-column, output scalar."""

    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: float
    y_std: float
    warnings: tuple = ()

    def apply(self, X, y=None):
        Xs = (np.asarray(X, dtype=float) - self.x_mean) / self.x_std
        if y is None:
            return Xs
        return Xs, (np.asarray(y, dtype=float) - self.y_mean) / self.y_std

    def restore_mean(self, mean):
        return np.asarray(mean) * self.y_std + self.y_mean

    def restore_var(self, var):
        return np.asarray(var) * self.y_std**2


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    name: str = "unnamed"
    standardization: Standardization | None = None

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        y = np.asarray(self.y, dtype=float).reshape(-1)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if X.shape[0] != y.shape[0]:
            raise ValueError("X and y row counts differ")
        if X.shape[0] < 1:
            raise ValueError("dataset must contain at least one row")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("dataset contains non-finite entries")

    def __len__(self):
        return self.y.shape[0]


def _parse_csv(handle, name: str, target: str | None) -> Dataset:
    reader = csv.reader(handle)
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError(f"{name}: empty file") from None
    header = [h.strip() for h in header]
    if target is None:
        target_idx = len(header) - 1
    else:
        if target not in header:
            raise ParseError(f"{name}: no column named {target!r} in header {header}")
        target_idx = header.index(target)
    rows = []
    for r, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ParseError(
                f"{name}: row {r} has {len(row)} cells, expected {len(header)}"
            )
        values = []
        for c, cell in enumerate(row):
            try:
                value = float(cell)
            except ValueError:
                raise ParseError(
                    f"{name}: row {r}, column {header[c]!r}: "
                    f"non-numeric cell {cell!r}"
                ) from None
            if not math.isfinite(value):
                raise ParseError(
                    f"{name}: row {r}, column {header[c]!r}: non-finite cell {cell!r}"
                )
            values.append(value)
        rows.append(values)
    if not rows:
        raise ParseError(f"{name}: no data rows")
    data = np.asarray(rows, dtype=float)
    mask = np.ones(len(header), dtype=bool)
    mask[target_idx] = False
    return Dataset(X=data[:, mask], y=data[:, target_idx], name=name)


def load_dataset(source: str, target: str | None = None) -> Dataset:
    """Load a bundled dataset by name or a CSV by path."""
    if source in BUNDLED:
        path = resources.files("sphgp").joinpath(f"data/{source}.csv")
        with path.open("r") as handle:
            return _parse_csv(handle, source, target)
    if not os.path.exists(source):
        raise ParseError(f"no such dataset file: {source}")
    with open(source) as handle:
        return _parse_csv(handle, os.path.basename(source), target)


def split_standardize(dataset: Dataset, test_fraction: float, seed: int):
    """Seeded split, then standardize both parts with train-only statistics."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie in (0, 1)")
    n = len(dataset)
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    n_test = max(1, int(round(test_fraction * n)))
    test_idx, train_idx = order[:n_test], order[n_test:]
    if train_idx.size == 0:
        raise ValueError("split leaves an empty training set")

    Xtr, ytr = dataset.X[train_idx], dataset.y[train_idx]
    warnings = []
    x_std = Xtr.std(axis=0)
    dead = x_std <= 0
    if np.any(dead):
        warnings.append(
            f"zero-variance input column(s) {np.nonzero(dead)[0].tolist()}; std forced to 1"
        )
        x_std = np.where(dead, 1.0, x_std)
    y_std = float(ytr.std())
    if y_std <= 0:
        warnings.append("zero-variance target; std forced to 1")
        y_std = 1.0
    transform = Standardization(
        x_mean=Xtr.mean(axis=0),
        x_std=x_std,
        y_mean=float(ytr.mean()),
        y_std=y_std,
        warnings=tuple(warnings),
    )
    Xtr_s, ytr_s = transform.apply(Xtr, ytr)
    Xte_s, yte_s = transform.apply(dataset.X[test_idx], dataset.y[test_idx])
    train = Dataset(X=Xtr_s, y=ytr_s, name=f"{dataset.name}[train]", standardization=transform)
    test = Dataset(X=Xte_s, y=yte_s, name=f"{dataset.name}[test]", standardization=transform)
    return train, test, transform


def evaluate(model: GPModel, test: Dataset, transform: Standardization) -> dict:
    """Test RMSE and NLPD on the original output scale.

    The predictive density is over observations: the de-standardized noise
    variance 1/beta * y_std^2 is added to the latent predictive variance.
    """
    post = predict(model, test.X)
    mean = transform.restore_mean(post.mean)
    var = transform.restore_var(post.var) + transform.y_std**2 / model.noise_precision
    if np.any(var <= 0):
        raise EvaluationError("nonpositive predictive variance at a test point")
    y = transform.restore_mean(test.y)  # test targets stored standardized
    rmse = float(np.sqrt(np.mean((y - mean) ** 2)))
    nlpd = float(np.mean(0.5 * np.log(2.0 * np.pi * var) + (y - mean) ** 2 / (2.0 * var)))
    return {"rmse": rmse, "nlpd": nlpd}


# ---------------------------------------------------------------------------
# Benchmark grid.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BenchmarkGrid:
    """Cross product of datasets x model configurations x seeds."""

    datasets: tuple  # dataset source strings
    configs: tuple  # ModelConfig instances
    seeds: tuple = (0, 1, 2, 3, 4)
    schedule: FitSchedule = field(default_factory=FitSchedule)
    test_fraction: float = 0.1

    def cells(self):
        for source in self.datasets:
            for config in self.configs:
                for seed in self.seeds:
                    yield source, config, seed


@dataclass
class BenchmarkResult:
    rows: list
    aggregates: list
    failures: list


def _cell_key(source: str, config: ModelConfig, seed: int, schedule: FitSchedule) -> str:
    payload = json.dumps(
        {"source": source, "config": vars(config), "seed": seed,
         "schedule": vars(schedule)},
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _config_label(source, config):
    return (
        source, config.kernel,
        f"{config.base_family}+{config.ortho_family if config.mode != 'svgp' else 'none'}"
        f"/{config.activation}",
        config.mode, config.num_base, config.num_ortho, config.truncation,
    )


def _run_cell(source, config, seed, schedule, test_fraction):
    dataset = load_dataset(source)
    train, test, transform = split_standardize(dataset, test_fraction, seed)
    model = init_model(config, train, seed=seed)
    fitted, trace = fit(model, train, replace(schedule, seed=seed))
    metrics = evaluate(fitted, test, transform)
    label = _config_label(source, config)
    return dict(
        zip(
            RESULT_COLUMNS,
            label + (seed, metrics["rmse"], metrics["nlpd"], trace.best_elbo, trace.throughput),
        )
    )


def _aggregate(rows):
    groups = {}
    for row in rows:
        key = tuple(row[c] for c in RESULT_COLUMNS[:7])
        groups.setdefault(key, []).append(row)
    out = []
    for key, members in groups.items():
        entry = dict(zip(RESULT_COLUMNS[:7], key))
        entry["n"] = len(members)
        for metric in ("rmse", "nlpd", "elbo", "throughput"):
            values = np.array([m[metric] for m in members], dtype=float)
            entry[f"{metric}_mean"] = float(values.mean())
            entry[f"{metric}_stderr"] = (
                float(values.std(ddof=1) / np.sqrt(values.size)) if values.size > 1 else 0.0
            )
        out.append(entry)
    return out


def run_benchmark(grid: BenchmarkGrid, out_dir: str) -> BenchmarkResult:
    """Run every grid cell, persisting rows incrementally for resume.

    A cell that already has a persisted row (keyed by a hash of its full
    configuration) is skipped; per-cell failures are recorded and do not
    abort the grid.
    """
    os.makedirs(out_dir, exist_ok=True)
    store = os.path.join(out_dir, "results_rows.jsonl")
    done = {}
    if os.path.exists(store):
        with open(store) as handle:
            for line in handle:
                record = json.loads(line)
                done[record["key"]] = record["row"]

    rows, failures = [], []
    for source, config, seed in grid.cells():
        key = _cell_key(source, config, seed, grid.schedule)
        if key in done:
            rows.append(done[key])
            continue
        try:
            row = _run_cell(source, config, seed, grid.schedule, grid.test_fraction)
        except Exception as exc:  # per-cell failures are data, not crashes
            failures.append(
                {"key": key, "cell": _config_label(source, config) + (seed,),
                 "error": f"{type(exc).__name__}: {exc}"}
            )
            continue
        rows.append(row)
        with open(store, "a") as handle:
            handle.write(json.dumps({"key": key, "row": row}) + "\n")
    return BenchmarkResult(rows=rows, aggregates=_aggregate(rows), failures=failures)


def write_results_csv(result: BenchmarkResult, path: str) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=RESULT_COLUMNS)
        writer.writeheader()
        for row in result.rows:
            writer.writerow(row)
