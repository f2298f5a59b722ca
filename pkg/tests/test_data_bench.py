import io
import os

import numpy as np
import pytest

from sphgp.data_bench import (
    BenchmarkGrid,
    Dataset,
    ParseError,
    load_dataset,
    run_benchmark,
    split_standardize,
    evaluate,
    write_results_csv,
)
from sphgp.training import FitSchedule, ModelConfig, init_model


def test_bundled_snelson_loads():
    ds = load_dataset("snelson")
    assert ds.X.shape == (200, 1)
    assert ds.y.shape == (200,)
    assert np.all(np.isfinite(ds.X)) and np.all(np.isfinite(ds.y))


def test_load_dataset_from_csv(tmp_path):
    path = tmp_path / "toy.csv"
    path.write_text("a,b,y\n1.0,2.0,3.0\n4.0,5.0,6.0\n")
    ds = load_dataset(str(path))
    assert ds.X.shape == (2, 2)
    assert np.array_equal(ds.y, [3.0, 6.0])


def test_parse_errors_name_the_row(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,y\n1.0,2.0\nnot_a_number,3.0\n")
    with pytest.raises(ParseError) as err:
        load_dataset(str(path))
    assert "row" in str(err.value)


def test_dataset_rejects_nonfinite():
    with pytest.raises(ValueError):
        Dataset(X=np.array([[np.nan]]), y=np.array([1.0]), name="bad")


def test_split_standardize_statistics():
    ds = load_dataset("snelson")
    train, test, transform = split_standardize(ds, 0.1, seed=0)
    assert len(train) == 180 and len(test) == 20
    # both splits come back standardized with train-only statistics
    assert abs(train.X.mean()) < 1e-12
    assert abs(train.y.mean()) < 1e-12
    assert train.X.std() == pytest.approx(1.0)
    assert train.y.std() == pytest.approx(1.0)
    # different seeds give different splits, same seed the same split
    train2, _, _ = split_standardize(ds, 0.1, seed=0)
    assert np.array_equal(train.X, train2.X)
    train3, _, _ = split_standardize(ds, 0.1, seed=1)
    assert not np.array_equal(train.X, train3.X)


def test_standardize_roundtrip():
    ds = load_dataset("snelson")
    _, _, transform = split_standardize(ds, 0.1, seed=0)
    y = np.array([0.3, -1.2])
    ys = (y - transform.y_mean) / transform.y_std
    assert np.max(np.abs(transform.restore_mean(ys) - y)) < 1e-12
    assert transform.restore_var(np.array([1.0]))[0] == pytest.approx(
        transform.y_std**2
    )


def test_zero_variance_column_warns(tmp_path):
    path = tmp_path / "flat.csv"
    rows = "\n".join(f"1.0,{v}" for v in np.linspace(0, 1, 30))
    path.write_text("a,y\n" + rows + "\n")
    ds = load_dataset(str(path))
    _, _, transform = split_standardize(ds, 0.1, seed=0)
    assert transform.x_std[0] == 1.0
    assert len(transform.warnings) == 1


def test_evaluate_reports_destandardized_metrics():
    rng = np.random.default_rng(0)
    X = rng.uniform(-2, 2, size=(50, 1))
    y = 10.0 * np.sin(X[:, 0])  # wide output scale to expose the transform
    ds = Dataset(X=X, y=y, name="toy")
    train, test, transform = split_standardize(ds, 0.2, seed=0)
    cfg = ModelConfig(
        kernel="squaredexp", mode="svgp", base_family="points", num_base=5, truncation=4
    )
    model = init_model(cfg, train, seed=0)
    metrics = evaluate(model, test, transform)
    assert np.isfinite(metrics["rmse"]) and np.isfinite(metrics["nlpd"])
    # an untrained unit-scale model is off by roughly the output scale,
    # so a de-standardized RMSE must be O(y_std), not O(1)
    assert metrics["rmse"] > 1.0


def test_benchmark_runs_and_resumes(tmp_path):
    grid = BenchmarkGrid(
        datasets=("snelson",),
        configs=(
            ModelConfig(kernel="squaredexp", mode="svgp", base_family="points", num_base=5, truncation=4),
        ),
        seeds=(0,),
        schedule=FitSchedule(optimizer="lbfgs", phase1_iters=3, max_iters=3),
    )
    out = str(tmp_path / "bench")
    result = run_benchmark(grid, out)
    assert len(result.rows) == 1
    assert not result.failures
    agg = result.aggregates[0]
    assert agg["n"] == 1
    assert np.isfinite(agg["rmse_mean"])

    # resume: the persisted row is reused, not recomputed
    store = os.path.join(out, "results_rows.jsonl")
    before = open(store).read()
    result2 = run_benchmark(grid, out)
    assert open(store).read() == before
    assert result2.rows == result.rows

    csv_path = os.path.join(out, "results.csv")
    write_results_csv(result2, csv_path)
    header = open(csv_path).readline().strip().split(",")
    assert header[:4] == ["dataset", "kernel", "features", "mode"]


def test_benchmark_records_cell_failures(tmp_path):
    bad = str(tmp_path / "missing.csv")
    grid = BenchmarkGrid(
        datasets=(bad,),
        configs=(
            ModelConfig(kernel="squaredexp", mode="svgp", base_family="points", num_base=4, truncation=4),
        ),
        seeds=(0,),
        schedule=FitSchedule(optimizer="lbfgs", phase1_iters=2, max_iters=2),
    )
    result = run_benchmark(grid, str(tmp_path / "bench"))
    assert result.rows == []
    assert len(result.failures) == 1
