"""Command-line surface: spectrum | fit | predict | benchmark.

Exit codes: 0 success, 1 usage/config error, 2 numerical failure,
3 partial benchmark failure.  All file outputs are atomic
(write-temp-then-rename), and every SVG plot gets a raw-data CSV sibling.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
import tempfile

import numpy as np

from .config import RunConfig, config_from_dict, load_config
from .data_bench import (
    BenchmarkGrid,
    EvaluationError,
    ParseError,
    load_dataset,
    run_benchmark,
    split_standardize,
)
from .features import ActivationShape, ConditioningError
from .kernels import ZonalKernel, kernel_spectrum, spectrum_diagnostics
from .models import (
    load_checkpoint,
    predict,
    predictive_variance_terms,
    save_checkpoint,
)
from .special_math import NumericalError, SphereGeometry
from .svg import Band, Panel, Series, render_panels
from .training import fit, init_model

__all__ = ["main", "atomic_write"]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2
EXIT_PARTIAL = 3

NUMERICAL_ERRORS = (ConditioningError, NumericalError, EvaluationError, FloatingPointError)


def atomic_write(path: str, content) -> None:
    """Write text or bytes to ``path`` via a temp file in the same directory."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    mode = "wb" if isinstance(content, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, mode) as handle:
            handle.write(content)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer)
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue()


# ---------------------------------------------------------------------------
# spectrum
# ---------------------------------------------------------------------------


def cmd_spectrum(config: RunConfig) -> int:
    spec_cfg = config.spectrum
    geometry = SphereGeometry.for_dimension(spec_cfg.ambient_dim)
    L = spec_cfg.truncation
    rows = []
    report_rows = []
    panels = []
    floor = 1e-20
    for family in spec_cfg.kernels:
        kernel = ZonalKernel(family)
        kspec = kernel_spectrum(kernel, geometry, L)
        for act_kind in spec_cfg.activations:
            act = ActivationShape.build(act_kind, geometry, L)
            report = spectrum_diagnostics(kspec, act.spectrum)
            lam = np.asarray(kspec.coefficients)
            sig = np.asarray(act.spectrum.coefficients)
            for ell in range(L + 1):
                rows.append(
                    [family, act_kind, ell,
                     repr(float(np.sqrt(max(lam[ell], 0.0)))), repr(float(sig[ell]))]
                )
            report_rows.append(
                [family, act_kind,
                 ";".join(map(str, report.mismatch_levels)),
                 ";".join(map(str, report.reverse_mismatch_levels)),
                 int(report.divergent), repr(report.truncation_residual)]
            )
            ells = np.arange(L + 1)
            panels.append(
                Panel(
                    title=f"{family} / {act_kind}"
                    + (" (divergent)" if report.divergent else ""),
                    series=(
                        Series(ells, np.log10(np.maximum(np.sqrt(np.maximum(lam, 0.0)), floor)),
                               label="sqrt kernel", color="#1f77b4"),
                        Series(ells, np.log10(np.maximum(np.abs(sig), floor)),
                               label="feature", color="#d62728", dashed=True),
                    ),
                    x_label="level",
                )
            )
    out = config.out_dir
    atomic_write(
        os.path.join(out, "spectrum.csv"),
        _csv_text(["kernel", "activation", "level", "sqrt_lambda", "varsigma"], rows),
    )
    atomic_write(
        os.path.join(out, "diagnostics.csv"),
        _csv_text(
            ["kernel", "activation", "mismatch_levels", "reverse_mismatch_levels",
             "divergent", "truncation_residual"],
            report_rows,
        ),
    )
    atomic_write(
        os.path.join(out, "spectrum.svg"),
        render_panels(panels, ncols=len(spec_cfg.activations)),
    )
    for row in report_rows:
        flag = "divergent" if row[4] else "convergent"
        mismatch = row[2] or "-"
        print(f"{row[0]:>10} + {row[1]:<8} {flag:<10} mismatch levels: {mismatch}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# fit / predict
# ---------------------------------------------------------------------------


def _checkpoint_paths(out_dir):
    return (
        os.path.join(out_dir, "checkpoint.json"),
        os.path.join(out_dir, "transform.json"),
        os.path.join(out_dir, "trace.csv"),
    )


def cmd_fit(config: RunConfig) -> int:
    dataset = load_dataset(config.dataset)
    train, _, transform = split_standardize(dataset, config.test_fraction, config.seed)
    model = init_model(config.model, train, seed=config.seed)
    fitted, trace = fit(model, train, config.schedule)
    ckpt_path, transform_path, trace_path = _checkpoint_paths(config.out_dir)
    os.makedirs(config.out_dir, exist_ok=True)

    tmp = ckpt_path + ".tmp~"
    save_checkpoint(fitted, tmp, seed=config.seed)
    os.replace(tmp, ckpt_path)

    import json

    atomic_write(
        transform_path,
        json.dumps(
            {
                "x_mean": transform.x_mean.tolist(),
                "x_std": transform.x_std.tolist(),
                "y_mean": transform.y_mean,
                "y_std": transform.y_std,
            }
        ),
    )
    trace_csv = _csv_text(
        ["iteration", "elapsed_s", "elbo", "param_norm"],
        [
            [
                i,
                f"{trace.elapsed_s[i]:.6f}",
                repr(float(trace.elbo[i])),
                repr(float(trace.param_norm[i])),
            ]
            for i in range(trace.elbo.size)
        ],
    )
    atomic_write(trace_path, trace_csv)
    print(
        f"fit: best ELBO {trace.best_elbo:.6f}, {trace.elbo.size} trace rows, "
        f"throughput {trace.throughput:.2f} it/s, converged={trace.converged}"
    )
    return EXIT_OK


def _load_transform(path):
    import json

    from .data_bench import Standardization

    with open(path) as handle:
        data = json.load(handle)
    return Standardization(
        x_mean=np.asarray(data["x_mean"]),
        x_std=np.asarray(data["x_std"]),
        y_mean=float(data["y_mean"]),
        y_std=float(data["y_std"]),
    )


def cmd_predict(config: RunConfig, plot: bool) -> int:
    ckpt_path, transform_path, _ = _checkpoint_paths(config.out_dir)
    model = load_checkpoint(ckpt_path)
    transform = _load_transform(transform_path)
    dataset = load_dataset(config.dataset)
    Xs = transform.apply(dataset.X)
    post = predict(model, Xs)
    mean = transform.restore_mean(post.mean)
    var = transform.restore_var(post.var)
    rows = [
        list(np.asarray(dataset.X[i])) + [repr(float(mean[i])), repr(float(var[i]))]
        for i in range(len(dataset))
    ]
    header = [f"x{j + 1}" for j in range(dataset.X.shape[1])] + ["mean", "variance"]
    atomic_write(os.path.join(config.out_dir, "predictions.csv"), _csv_text(header, rows))
    if plot:
        _emit_prediction_plots(config, model, dataset, transform, mean, var)
    print(f"predict: wrote {len(rows)} rows")
    return EXIT_OK


def _emit_prediction_plots(config, model, dataset, transform, mean, var):
    # Order by the first input coordinate so polylines are monotone in x.
    order = np.argsort(dataset.X[:, 0])
    x = dataset.X[order, 0]
    mu = mean[order]
    sd = np.sqrt(np.maximum(var[order], 0.0))
    band_panel = Panel(
        title=f"{dataset.name}: predictive mean +- 2 sd",
        bands=(Band(x, mu - 2 * sd, mu + 2 * sd),),
        series=(Series(x, mu, label="mean"),),
        points=((dataset.X[:, 0], dataset.y, "#555555"),),
        x_label="x",
    )
    terms = predictive_variance_terms(model, transform.apply(dataset.X)[order])
    labels = [
        ("prior", "+ prior"),
        ("nystrom_subtract", "- nystrom"),
        ("base_add", "+ base q"),
        ("orthogonal_subtract", "- orthogonal"),
        ("orthogonal_add", "+ orthogonal q"),
    ]
    term_series = tuple(
        Series(x, transform.restore_var(terms[key]), label=label)
        for key, label in labels
    )
    term_panel = Panel(
        title="predictive variance terms", series=term_series, x_label="x"
    )
    atomic_write(
        os.path.join(config.out_dir, "prediction_plot.svg"),
        render_panels([band_panel, term_panel], ncols=2),
    )
    term_rows = [
        [repr(float(x[i]))] + [repr(float(transform.restore_var(terms[k])[i])) for k, _ in labels]
        for i in range(x.size)
    ]
    atomic_write(
        os.path.join(config.out_dir, "prediction_plot.csv"),
        _csv_text(["x"] + [k for k, _ in labels], term_rows),
    )


# ---------------------------------------------------------------------------
# benchmark
# ---------------------------------------------------------------------------


def cmd_benchmark(config: RunConfig) -> int:
    spec = config.benchmark
    grid = BenchmarkGrid(
        datasets=spec.datasets,
        configs=spec.configs,
        seeds=spec.seeds,
        schedule=config.schedule,
        test_fraction=config.test_fraction,
    )
    result = run_benchmark(grid, config.out_dir)
    from .data_bench import RESULT_COLUMNS

    atomic_write(
        os.path.join(config.out_dir, "results.csv"),
        _csv_text(RESULT_COLUMNS, [[row[c] for c in RESULT_COLUMNS] for row in result.rows]),
    )

    if result.aggregates:
        print(
            f"{'dataset':<10} {'kernel':<10} {'features':<28} {'M':>4} {'K':>4} "
            f"{'L':>3} {'rmse':>14} {'nlpd':>14} {'elbo':>12} {'it/s':>8}"
        )
        for agg in sorted(result.aggregates, key=lambda a: (a["dataset"], a["features"], a["M"], a["K"], a["L"])):
            print(
                f"{agg['dataset']:<10} {agg['kernel']:<10} {agg['features']:<28} "
                f"{agg['M']:>4} {agg['K']:>4} {agg['L']:>3} "
                f"{agg['rmse_mean']:>8.3f}+-{agg['rmse_stderr']:<5.3f} "
                f"{agg['nlpd_mean']:>8.3f}+-{agg['nlpd_stderr']:<5.3f} "
                f"{agg['elbo_mean']:>12.2f} {agg['throughput_mean']:>8.2f}"
            )
    if result.failures:
        print(f"{len(result.failures)} cell(s) failed:", file=sys.stderr)
        for failure in result.failures:
            print(f"  {failure['cell']}: {failure['error']}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def _build_parser():
    parser = _Parser(prog="sphgp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("spectrum", "fit", "predict", "benchmark"):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="YAML run configuration")
        p.add_argument("--out", default=None, help="output directory override")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--plot", action="store_true", help="emit SVG plots")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    try:
        config = load_config(args.config) if args.config else config_from_dict({})
        config = config.with_overrides(out_dir=args.out, seed=args.seed)
    except (OSError, ValueError, TypeError, ParseError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    try:
        if args.command == "spectrum":
            return cmd_spectrum(config)
        if args.command == "fit":
            return cmd_fit(config)
        if args.command == "predict":
            return cmd_predict(config, plot=args.plot)
        if args.command == "benchmark":
            return cmd_benchmark(config)
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ParseError, ValueError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_USAGE  # unreachable


if __name__ == "__main__":
    sys.exit(main())
