"""
Shared training plumbing: task sampling, batching, metric logs, divergence
"""
import dataclasses
import os
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from metasdf import config
from metasdf.config import ExperimentConfig
from metasdf.data.data_loader import ShapeRecord
from metasdf.data.data_saver import save_metric_log
from metasdf.data.sampling import Task, make_task
from metasdf.errors import DivergenceError

METRIC_COLUMNS = ["step", "epoch", "outer_loss", "val_loss", "wallclock_ms"]
METRICS_NAME = "metrics.csv"

# Offsets keep validation draws apart from training draws of the same shape
VAL_SEED_OFFSET = 7919


def task_for(record: ShapeRecord, cfg: ExperimentConfig, *seed_parts: int) -> Task:
    """Sample a task for one shape with a seed derived from (seed parts...)"""
    return make_task(record.grid, cfg.context_mode, cfg.context_n, cfg.target_n,
                     seed=[int(s) for s in seed_parts], shape_id=record.shape_id,
                     class_label=record.class_label)


def epoch_batches(count: int, batch_size: int, seed: int, epoch: int) -> Iterator[np.ndarray]:
    """Deterministic shuffle of range(count) for one epoch, cut into batches"""
    order = np.random.default_rng([seed, epoch]).permutation(count)
    for start in range(0, count, batch_size):
        yield order[start:start + batch_size]


def validation_tasks(records: Sequence[ShapeRecord], cfg: ExperimentConfig, seed: int,
                     limit: Optional[int] = None) -> List[Task]:
    limit = len(records) if limit is None else min(limit, len(records))
    return [task_for(r, cfg, seed, VAL_SEED_OFFSET, i) for i, r in enumerate(records[:limit])]


def check_divergence(loss: float, step: int, limit: float = config.DIVERGENCE_LIMIT,
                     diagnostics: Optional[Dict[str, Any]] = None) -> None:
    """Raise DivergenceError when a training loss blows up"""
    if not np.isfinite(loss) or loss > limit:
        details = dict(diagnostics or {})
        details.update({"step": step, "loss": float(loss), "limit": limit})
        raise DivergenceError(f"Training diverged at step {step}: loss {loss:.4g} exceeds {limit:g}", details)


@dataclass
class MetricLog:
    """Per-step metric rows, turned into a DataFrame for saving and analysis"""
    rows: List[Dict[str, Any]] = field(default_factory=list)
    started: float = field(default_factory=time.perf_counter)
    offset_ms: float = 0.0

    @classmethod
    def resume(cls, previous: Optional[pd.DataFrame], step: int) -> "MetricLog":
        """Continue a log, dropping rows logged after the checkpointed step"""
        log = cls()
        if previous is not None and len(previous):
            kept = previous[previous["step"] <= step]
            log.rows = kept.to_dict("records")
            if len(kept):
                log.offset_ms = float(kept["wallclock_ms"].iloc[-1])
        return log

    def add(self, step: int, epoch: int, outer_loss: float, **extra: Any) -> Dict[str, Any]:
        row = {
            "step": step,
            "epoch": epoch,
            "outer_loss": float(outer_loss),
            "val_loss": float("nan"),
            "wallclock_ms": self.offset_ms + (time.perf_counter() - self.started) * 1000.0,
        }
        row.update(extra)
        self.rows.append(row)
        return row

    def set_val(self, val_loss: float) -> None:
        if self.rows:
            self.rows[-1]["val_loss"] = float(val_loss)

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.rows)
        if df.empty:
            return pd.DataFrame(columns=METRIC_COLUMNS)
        ordered = METRIC_COLUMNS + [c for c in df.columns if c not in METRIC_COLUMNS]
        return df[ordered]


def elapsed_ms(start: float) -> float:
    return (time.perf_counter() - start) * 1000.0


@dataclass
class TrainState:
    """Where a training run stands: next epoch to run, steps done, best validation metric"""
    epoch: int = 0
    step: int = 0
    best: float = float("inf")


def run_training(records: Sequence[ShapeRecord], cfg: ExperimentConfig,
                 outer: Callable[[List[Task]], float], validate: Callable[[], float],
                 save: Optional[Callable[[str, Dict[str, Any]], None]] = None,
                 output_dir: Optional[str] = None, log: Optional[MetricLog] = None,
                 state: Optional[TrainState] = None, context_mode: Optional[str] = None,
                 diagnostics: Optional[Callable[[], Dict[str, Any]]] = None) -> MetricLog:
    """
    Epoch loop shared by the trainers

    Every outer step draws one task per shape of the batch, seeded by
    (seed, epoch, shape index). Validation runs after every epoch; with an
    output directory the best model goes to best.ckpt, the latest to
    last.ckpt, and the metric rows to metrics.csv.

    Args:
        records: Training shapes
        cfg: Resolved experiment config (epochs, batch_tasks, max_steps, seed)
        outer: Takes a batch of tasks, updates the model, returns the mean loss (NaN if skipped)
        validate: Returns the validation metric (lower is better)
        save: save(path, progress) writes a checkpoint
        output_dir: Run directory, or None to keep everything in memory
        log: Metric log to continue
        state: Progress to continue from
        context_mode: Override of cfg.context_mode for training tasks
        diagnostics: Extra fields for divergence reports

    Returns:
        The metric log
    """
    log = log if log is not None else MetricLog()
    state = state if state is not None else TrainState()
    task_cfg = cfg if context_mode is None else dataclasses.replace(cfg, context_mode=context_mode)
    stop = False
    for epoch in range(state.epoch, cfg.epochs):
        epoch_losses = []
        for batch in epoch_batches(len(records), cfg.batch_tasks, cfg.seed, epoch):
            tasks = [task_for(records[i], task_cfg, cfg.seed, epoch, int(i)) for i in batch]
            loss = outer(tasks)
            state.step += 1
            log.add(state.step, epoch, loss)
            if np.isfinite(loss):
                epoch_losses.append(loss)
                details = {"epoch": epoch, "shapes": [t.shape_id for t in tasks]}
                if diagnostics is not None:
                    details.update(diagnostics())
                check_divergence(loss, state.step, diagnostics=details)
            if cfg.max_steps is not None and state.step >= cfg.max_steps:
                stop = True
                break

        train_mean = float(np.mean(epoch_losses)) if epoch_losses else float("nan")
        val_loss = validate()
        if not np.isfinite(val_loss):
            val_loss = train_mean
        log.set_val(val_loss)
        state.epoch = epoch + 1
        print(f"Epoch {epoch + 1}/{cfg.epochs}: train loss {train_mean:.5f}, val {val_loss:.5f}")

        improved = np.isfinite(val_loss) and val_loss < state.best
        if improved:
            state.best = val_loss
        if output_dir and save is not None:
            progress = {"next_epoch": state.epoch, "step": state.step, "metric": val_loss,
                        "best_metric": state.best}
            best_path = os.path.join(output_dir, "best.ckpt")
            if improved or not os.path.exists(best_path):
                save(best_path, progress)
            save(os.path.join(output_dir, "last.ckpt"), progress)
            save_metric_log(log.to_frame(), os.path.join(output_dir, METRICS_NAME))
        if stop:
            break
    return log


def resume_state(header: Dict[str, Any], output_dir: Optional[str]) -> Tuple[TrainState, MetricLog]:
    """Progress and metric log of a run continued from its last checkpoint"""
    state = TrainState(epoch=int(header.get("next_epoch", 0)), step=int(header.get("step", 0)),
                       best=float(header.get("best_metric", np.inf)))
    previous = None
    if output_dir and os.path.exists(os.path.join(output_dir, METRICS_NAME)):
        previous = pd.read_csv(os.path.join(output_dir, METRICS_NAME))
    return state, MetricLog.resume(previous, state.step)
