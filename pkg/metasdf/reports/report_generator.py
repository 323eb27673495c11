"""
Plain-text reports for evaluation, benchmark and training runs
"""
from typing import Any, Dict, Optional

import numpy as np
import pandas as pd


def _fmt(value: Any, width: int = 12, digits: int = 6) -> str:
    if isinstance(value, (float, np.floating)):
        text = "nan" if not np.isfinite(value) else f"{value:.{digits}f}"
    else:
        text = str(value)
    return f"{text:<{width}}"


def generate_summary_report(summary_df: pd.DataFrame, title: str = "RECONSTRUCTION SUMMARY") -> str:
    """
    Method table: dense l1 and Chamfer statistics

    Args:
        summary_df: Output of analytics.method_summary

    Returns:
        String containing the table
    """
    report = f"{title}:\n"
    report += "-" * 100 + "\n"
    report += (f"{'Method':<18}{'Shapes':<8}{'Runs':<6}{'l1 mean':<12}{'l1 median':<12}{'l1 std':<12}"
               f"{'CD mean':<12}{'CD median':<12}{'run std':<12}\n")
    report += "-" * 100 + "\n"
    for _, row in summary_df.iterrows():
        report += (f"{row['method']:<18}{row['shapes']:<8}{row['runs']:<6}"
                   f"{_fmt(row['l1_mean'])}{_fmt(row['l1_median'])}{_fmt(row['l1_std'])}"
                   f"{_fmt(row['chamfer_mean'])}{_fmt(row['chamfer_median'])}{_fmt(row['run_l1_std'])}\n")
    return report


def generate_class_report(class_df: pd.DataFrame) -> str:
    """Mean l1 by class, one line per method"""
    if class_df.empty:
        return ""
    report = "MEAN L1 BY CLASS:\n"
    header = f"{'Method':<18}" + "".join(f"{str(c):<10}" for c in class_df.columns)
    report += header + "\n" + "-" * len(header) + "\n"
    for method, row in class_df.iterrows():
        report += f"{method:<18}" + "".join(_fmt(v, 10, 5) for v in row) + "\n"
    return report


def generate_bench_report(timing_df: pd.DataFrame, reference: Optional[str] = "metasdf") -> str:
    """
    Median wall-clock per method with ratios against the reference method

    Args:
        timing_df: Output of analytics.timing_summary
        reference: Name shown in the ratio column header
    """
    report = "INFERENCE TIMING:\n"
    report += "-" * 80 + "\n"
    report += f"{'Method':<18}{'Samples':<9}{'Median ms':<12}{'Mean ms':<12}{'Min ms':<12}{'Max ms':<12}"
    report += f"{'x ' + str(reference):<12}\n"
    report += "-" * 80 + "\n"
    for _, row in timing_df.iterrows():
        report += (f"{row['method']:<18}{row['samples']:<9}{_fmt(row['median_ms'], 12, 2)}"
                   f"{_fmt(row['mean_ms'], 12, 2)}{_fmt(row['min_ms'], 12, 2)}{_fmt(row['max_ms'], 12, 2)}"
                   f"{_fmt(row['ratio'], 12, 2)}\n")
    return report


def generate_training_report(config_dict: Dict[str, Any], curve: Dict[str, float], version: str) -> str:
    """Run settings and the start/end of the loss curve"""
    report = "TRAINING RUN\n"
    report += f"Version: {version}\n"
    report += "=" * 50 + "\n\n"
    report += "SETTINGS\n"
    report += "-" * 50 + "\n"
    for key in sorted(config_dict):
        if key == "extra" and not config_dict[key]:
            continue
        report += f"{key}: {config_dict[key]}\n"
    report += "\nLOSS CURVE\n"
    report += "-" * 50 + "\n"
    report += f"Outer steps: {curve['steps']}\n"
    report += f"First-window mean loss: {_fmt(curve['first']).strip()}\n"
    report += f"Last-window mean loss: {_fmt(curve['last']).strip()}\n"
    report += f"Improvement: {_fmt(curve['improvement'], 0, 2).strip()}x\n"
    report += f"Best validation metric: {_fmt(curve['best_val']).strip()}\n"
    return report
