"""
Aggregation of evaluation, timing and training tables
"""
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

PER_SHAPE_COLUMNS = ["method", "run", "shape_id", "class", "context_mode", "l1", "chamfer", "wallclock_ms"]


def method_summary(per_shape_df: pd.DataFrame) -> pd.DataFrame:
    """
    Mean / median / std of the dense l1 and Chamfer distance per method

    With several runs, run_l1_std is the spread of the per-run mean l1.

    Args:
        per_shape_df: One row per (method, run, shape)

    Returns:
        DataFrame indexed 0..n-1 with a 'method' column, in first-seen method order
    """
    if per_shape_df.empty:
        return pd.DataFrame(columns=["method", "shapes", "runs", "l1_mean", "l1_median", "l1_std",
                                     "chamfer_mean", "chamfer_median", "chamfer_std", "run_l1_std",
                                     "wallclock_median_ms"])
    order = list(dict.fromkeys(per_shape_df["method"]))
    grouped = per_shape_df.groupby("method", sort=False)
    summary = pd.DataFrame({
        "shapes": grouped["shape_id"].nunique(),
        "runs": grouped["run"].nunique(),
        "l1_mean": grouped["l1"].mean(),
        "l1_median": grouped["l1"].median(),
        "l1_std": grouped["l1"].std(ddof=0),
        "chamfer_mean": grouped["chamfer"].mean(),
        "chamfer_median": grouped["chamfer"].median(),
        "chamfer_std": grouped["chamfer"].std(ddof=0),
        "wallclock_median_ms": grouped["wallclock_ms"].median(),
    })
    run_means = per_shape_df.groupby(["method", "run"], sort=False)["l1"].mean()
    summary["run_l1_std"] = run_means.groupby(level=0).std(ddof=0)
    summary = summary.loc[order].reset_index()
    return summary


def class_summary(per_shape_df: pd.DataFrame) -> pd.DataFrame:
    """Mean l1 per method and class (method rows, class columns)"""
    if per_shape_df.empty:
        return pd.DataFrame()
    table = per_shape_df.pivot_table(index="method", columns="class", values="l1", aggfunc="mean")
    order = list(dict.fromkeys(per_shape_df["method"]))
    return table.loc[order]


def method_ordering(summary_df: pd.DataFrame, metric: str = "l1_mean") -> List[str]:
    """Methods from best (lowest metric) to worst; NaN metrics go last"""
    ranked = summary_df.sort_values(metric, kind="mergesort", na_position="last")
    return list(ranked["method"])


def ordering_holds(summary_df: pd.DataFrame, expected: Sequence[str], metric: str = "l1_mean") -> bool:
    """Whether the methods in `expected` are strictly increasing in `metric`"""
    values = summary_df.set_index("method")[metric]
    missing = [m for m in expected if m not in values.index]
    if missing:
        return False
    ordered = [values[m] for m in expected]
    return all(a < b for a, b in zip(ordered[:-1], ordered[1:]))


def timing_summary(timing_df: pd.DataFrame, reference: Optional[str] = "metasdf") -> pd.DataFrame:
    """
    Median wall-clock per method and its ratio to a reference method

    Args:
        timing_df: Rows with 'method', 'shape_id', 'repeat', 'wallclock_ms'
        reference: Method the ratios are taken against (ratio column omitted if absent)

    Returns:
        DataFrame with method, samples, median_ms, mean_ms, min_ms, max_ms and ratio
    """
    if timing_df.empty:
        return pd.DataFrame(columns=["method", "samples", "median_ms", "mean_ms", "min_ms", "max_ms", "ratio"])
    order = list(dict.fromkeys(timing_df["method"]))
    grouped = timing_df.groupby("method", sort=False)["wallclock_ms"]
    summary = pd.DataFrame({
        "samples": grouped.count(),
        "median_ms": grouped.median(),
        "mean_ms": grouped.mean(),
        "min_ms": grouped.min(),
        "max_ms": grouped.max(),
    }).loc[order]
    if reference in summary.index and summary.loc[reference, "median_ms"] > 0:
        summary["ratio"] = summary["median_ms"] / summary.loc[reference, "median_ms"]
    else:
        summary["ratio"] = np.nan
    return summary.reset_index()


def ratio_table(timing_summary_df: pd.DataFrame) -> pd.DataFrame:
    """Pairwise median-time ratios (row method time / column method time)"""
    medians = timing_summary_df.set_index("method")["median_ms"]
    return pd.DataFrame(np.outer(medians, 1.0 / medians.replace(0, np.nan)),
                        index=medians.index, columns=medians.index)


def curve_summary(metrics_df: pd.DataFrame, window: int = 10) -> Dict[str, float]:
    """
    First-window and last-window means of the outer loss

    Args:
        metrics_df: Training metric log
        window: Steps averaged at each end

    Returns:
        Dict with steps, first, last, improvement (first / last) and best val
    """
    losses = metrics_df["outer_loss"].dropna() if not metrics_df.empty else pd.Series(dtype=float)
    if losses.empty:
        return {"steps": 0, "first": np.nan, "last": np.nan, "improvement": np.nan, "best_val": np.nan}
    first = float(losses.iloc[:window].mean())
    last = float(losses.iloc[-window:].mean())
    val = metrics_df["val_loss"].dropna()
    return {
        "steps": int(len(metrics_df)),
        "first": first,
        "last": last,
        "improvement": first / last if last > 0 else np.inf,
        "best_val": float(val.min()) if not val.empty else np.nan,
    }
