"""UCI desk-scale benchmark: energy and yacht with a decoupled basis.

Expects data/uci/energy.csv and data/uci/yacht.csv (run scripts/fetch_uci.py
first).  Cells:

  * energy: arccos kernel, softplus features, M=128 base + K=128 orthogonal
  * yacht:  matern52 kernel, relu features, M=128 base + K=128 orthogonal,
            and the K=0 control it must beat on RMSE

Five seeds each at 10% test.  Rows are persisted incrementally, so an
interrupted run resumes where it stopped.

Usage: python scripts/run_uci.py [--data data/uci] [--out out/uci]
"""

import argparse
import os
import sys

from sphgp.data_bench import BenchmarkGrid, run_benchmark, write_results_csv
from sphgp.training import FitSchedule, ModelConfig


def build_grid(data_dir: str) -> BenchmarkGrid:
    energy = os.path.join(data_dir, "energy.csv")
    yacht = os.path.join(data_dir, "yacht.csv")
    for path in (energy, yacht):
        if not os.path.exists(path):
            raise FileNotFoundError(f"{path} missing; run scripts/fetch_uci.py first")
    decoupled = dict(
        mode="solve",
        base_family="activations",
        num_base=128,
        ortho_family="points",
        num_ortho=128,
        truncation=8,
    )
    return BenchmarkGrid(
        datasets=(energy, yacht),
        configs=(
            ModelConfig(kernel="arccos1", activation="softplus", **decoupled),
            ModelConfig(kernel="matern52", activation="relu", **decoupled),
            ModelConfig(
                kernel="matern52",
                activation="relu",
                mode="svgp",
                base_family="activations",
                num_base=128,
                truncation=8,
            ),
        ),
        seeds=(0, 1, 2, 3, 4),
        schedule=FitSchedule(optimizer="lbfgs", phase1_iters=100, max_iters=300),
        test_fraction=0.1,
    )


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--data", default="data/uci")
    parser.add_argument("--out", default="out/uci")
    args = parser.parse_args(argv)

    grid = build_grid(args.data)
    result = run_benchmark(grid, args.out)
    write_results_csv(result, os.path.join(args.out, "results.csv"))
    for agg in sorted(
        result.aggregates, key=lambda a: (a["dataset"], a["features"], a["K"])
    ):
        print(
            f"{os.path.basename(agg['dataset']):<12} {agg['kernel']:<10} "
            f"{agg['features']:<28} K={agg['K']:<4} "
            f"rmse {agg['rmse_mean']:.3f}+-{agg['rmse_stderr']:.3f}  "
            f"nlpd {agg['nlpd_mean']:.3f}+-{agg['nlpd_stderr']:.3f}"
        )
    if result.failures:
        for failure in result.failures:
            print(f"FAILED {failure['cell']}: {failure['error']}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
