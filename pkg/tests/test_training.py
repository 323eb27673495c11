import dataclasses
import os

import numpy as np
import pandas as pd
import pytest
from numpy import testing as npt

from metasdf.data.data_loader import load_dataset
from metasdf.errors import DivergenceError, SdfDataError
from metasdf.reports.analytics import (
    class_summary, curve_summary, method_ordering, method_summary, ordering_holds, ratio_table,
    timing_summary,
)
from metasdf.training.common import MetricLog, check_divergence, epoch_batches
from metasdf.training.meta_learner import load_meta_checkpoint, train_meta


def test_epoch_batches_cover_every_shape_once():
    batches = list(epoch_batches(10, 4, seed=0, epoch=2))
    assert [len(b) for b in batches] == [4, 4, 2]
    assert sorted(np.concatenate(batches).tolist()) == list(range(10))
    again = list(epoch_batches(10, 4, seed=0, epoch=2))
    assert all(np.array_equal(a, b) for a, b in zip(batches, again))


def test_divergence_is_reported_with_diagnostics():
    check_divergence(10.0, step=1)
    with pytest.raises(DivergenceError) as info:
        check_divergence(1e4, step=5, diagnostics={"epoch": 0})
    assert info.value.diagnostics["step"] == 5
    assert info.value.diagnostics["epoch"] == 0


def test_metric_log_resume_drops_later_rows():
    previous = pd.DataFrame({"step": [1, 2, 3], "epoch": [0, 0, 1], "outer_loss": [0.3, 0.2, 0.1],
                             "val_loss": [np.nan, 0.25, np.nan], "wallclock_ms": [10.0, 20.0, 30.0]})
    log = MetricLog.resume(previous, step=2)
    assert [r["step"] for r in log.rows] == [1, 2]
    row = log.add(3, 1, 0.15)
    assert row["wallclock_ms"] >= 20.0
    assert list(log.to_frame().columns[:5]) == ["step", "epoch", "outer_loss", "val_loss", "wallclock_ms"]


def test_train_meta_writes_checkpoints_and_metrics(tmp_path, blob_dataset, small_config):
    train = load_dataset(blob_dataset, "train")
    val = load_dataset(blob_dataset, "val")
    out = str(tmp_path / "run")
    os.makedirs(out)
    model, metrics = train_meta(train.records, small_config, val.records, output_dir=out)
    assert len(metrics) == 3
    assert metrics["step"].tolist() == [1, 2, 3]
    assert np.isfinite(metrics["val_loss"].iloc[-1])
    for name in ("best.ckpt", "last.ckpt", "metrics.csv"):
        assert os.path.exists(os.path.join(out, name))
    loaded, _, optimizer, header = load_meta_checkpoint(os.path.join(out, "last.ckpt"))
    assert loaded.theta.checksum() == model.theta.checksum()
    assert header["next_epoch"] == 1
    assert optimizer.t["theta"] == 3


def test_training_is_reproducible(blob_dataset, small_config):
    train = load_dataset(blob_dataset, "train")
    cfg = dataclasses.replace(small_config, max_steps=2)
    first, _ = train_meta(train.records, cfg)
    second, _ = train_meta(train.records, cfg)
    assert first.theta.checksum() == second.theta.checksum()


def test_resume_continues_the_step_count(tmp_path, blob_dataset, small_config):
    train = load_dataset(blob_dataset, "train")
    out = str(tmp_path / "run")
    os.makedirs(out)
    train_meta(train.records, small_config, output_dir=out)
    longer = dataclasses.replace(small_config, epochs=2)
    resumed, metrics = train_meta(train.records, longer, output_dir=out,
                                  resume_from=os.path.join(out, "last.ckpt"))
    straight, _ = train_meta(train.records, longer)
    assert metrics["step"].tolist() == [1, 2, 3, 4, 5, 6]
    npt.assert_allclose(resumed.theta.data, straight.theta.data, rtol=1e-12, atol=1e-15)


def test_training_needs_shapes(small_config):
    with pytest.raises(SdfDataError):
        train_meta([], small_config)


def per_shape_frame():
    return pd.DataFrame({
        "method": ["metasdf"] * 4 + ["cnp"] * 4,
        "run": [0, 0, 1, 1] * 2,
        "shape_id": ["a", "b"] * 4,
        "class": [1, 2] * 4,
        "context_mode": ["dense"] * 8,
        "l1": [0.01, 0.03, 0.02, 0.02, 0.05, 0.07, 0.06, 0.06],
        "chamfer": [1e-4] * 8,
        "wallclock_ms": [5.0] * 8,
    })


def test_method_summary_and_ordering():
    summary = method_summary(per_shape_frame())
    assert summary["method"].tolist() == ["metasdf", "cnp"]
    assert summary.loc[0, "l1_mean"] == pytest.approx(0.02)
    assert summary.loc[0, "shapes"] == 2
    assert summary.loc[0, "runs"] == 2
    assert summary.loc[0, "run_l1_std"] == pytest.approx(0.0)
    assert method_ordering(summary) == ["metasdf", "cnp"]
    assert ordering_holds(summary, ["metasdf", "cnp"])
    assert not ordering_holds(summary, ["cnp", "metasdf"])
    assert not ordering_holds(summary, ["metasdf", "autodec-concat"])


def test_class_summary():
    table = class_summary(per_shape_frame())
    assert table.loc["cnp", 1] == pytest.approx(0.055)
    assert table.loc["metasdf", 2] == pytest.approx(0.025)


def test_timing_ratios():
    timing = pd.DataFrame({"method": ["metasdf"] * 3 + ["autodec-concat"] * 3,
                           "shape_id": ["a"] * 6, "repeat": [0, 1, 2] * 2,
                           "wallclock_ms": [2.0, 3.0, 4.0, 300.0, 310.0, 290.0]})
    summary = timing_summary(timing)
    assert summary.set_index("method").loc["autodec-concat", "ratio"] == pytest.approx(100.0)
    ratios = ratio_table(summary)
    assert ratios.loc["metasdf", "autodec-concat"] == pytest.approx(0.01)


def test_curve_summary():
    metrics = pd.DataFrame({"step": range(1, 21), "epoch": [0] * 20, "outer_loss": np.linspace(1.0, 0.1, 20),
                            "val_loss": [np.nan] * 19 + [0.2], "wallclock_ms": range(20)})
    curve = curve_summary(metrics, window=5)
    assert curve["steps"] == 20
    assert curve["improvement"] > 1.0
    assert curve["best_val"] == pytest.approx(0.2)
