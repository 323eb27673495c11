"""
evaluate: per-shape and aggregate reconstruction metrics for one or more checkpoints
"""
import argparse
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Dict, List

import numpy as np
import pandas as pd

from metasdf import config
from metasdf.commands.common import (
    add_output_argument, context_settings, finish_run, load_split, provenance, require,
)
from metasdf.config import CONTEXT_MODES
from metasdf.data.data_loader import ShapeRecord
from metasdf.data.data_saver import save_json, save_metric_log, save_text_report
from metasdf.data.sampling import make_task
from metasdf.errors import NonFiniteError
from metasdf.geometry.grid_eval import grid_eval, surface_chamfer
from metasdf.reports.analytics import PER_SHAPE_COLUMNS, class_summary, method_summary
from metasdf.reports.report_generator import generate_class_report, generate_summary_report
from metasdf.training.inference import DEFAULT_EXTRACT_RES, Predictor, load_model
from metasdf.utils.file_utils import create_output_directory
from metasdf.utils.logging_utils import log_debug, log_problem


def add_parser(subparsers) -> None:
    parser = subparsers.add_parser("evaluate", help="Reconstruction metrics on a dataset split")
    parser.add_argument("--checkpoint", action="append", required=True,
                        help="Checkpoint to evaluate (repeatable); 'oracle' interpolates the true grid")
    parser.add_argument("--dataset", required=True, help="Dataset directory")
    parser.add_argument("--split", default="test", help="Split to evaluate ('all' for every split)")
    parser.add_argument("--context-mode", choices=CONTEXT_MODES, help="Override each model's context mode")
    parser.add_argument("--context-n", type=int, help="Context points per shape")
    parser.add_argument("--runs", type=int, default=1, help="Repeat with this many context seeds")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--res", type=int, default=None, help="Surface extraction resolution")
    parser.add_argument("--max-shapes", type=int, default=None)
    add_output_argument(parser)
    parser.set_defaults(handler=run)


def evaluate_shape(predictor: Predictor, record: ShapeRecord, mode: str, n: int, seed: List[int],
                   extract_res: int) -> Dict[str, Any]:
    """
    Fit one shape from context and score it

    l1 is taken on the shape's own lattice; Chamfer compares surfaces extracted
    at extract_res against the true zero level.
    """
    task = make_task(record.grid, mode, n, 1, seed=seed, shape_id=record.shape_id,
                     class_label=record.class_label)
    fit = predictor.fit(task.context_coords, task.context_values, seed=seed[-1], grid=record.grid)
    row = {"method": predictor.method, "shape_id": record.shape_id, "class": record.class_label,
           "context_mode": mode, "wallclock_ms": fit.wallclock_ms}
    try:
        dense = grid_eval(fit.predict, record.grid.resolution, record.grid.dim)
        row["l1"] = float(np.mean(np.abs(dense.values - record.grid.values)))
        surface = dense if dense.resolution == (extract_res,) * record.grid.dim else \
            grid_eval(fit.predict, extract_res, record.grid.dim)
        row["chamfer"] = surface_chamfer(surface, record.grid, seed=seed[-1])
    except NonFiniteError as e:
        log_problem(f"{predictor.method} on {record.shape_id}: {e}")
        row["l1"] = np.nan
        row["chamfer"] = np.nan
    return row


def evaluate_method(predictor: Predictor, records: List[ShapeRecord], args: argparse.Namespace,
                    extract_res: int, threads: int = config.THREADS) -> List[Dict[str, Any]]:
    mode, n = context_settings(predictor, args.context_mode, args.context_n)
    rows = []
    for run_index in range(args.runs):
        jobs = [(record, [args.seed, run_index, i]) for i, record in enumerate(records)]
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(lambda job: evaluate_shape(predictor, job[0], mode, n, job[1],
                                                                   extract_res), jobs))
        else:
            results = [evaluate_shape(predictor, record, mode, n, seed, extract_res) for record, seed in jobs]
        # Collected in shape order whatever the completion order
        for row in results:
            row["run"] = run_index
            rows.append(row)
        run_l1 = np.nanmean([r["l1"] for r in results]) if results else np.nan
        print(f"  {predictor.method} run {run_index + 1}/{args.runs}: mean l1 {run_l1:.6f}")
    return rows


def run(args: argparse.Namespace) -> int:
    dataset = load_split(require(args.dataset, "--dataset"), args.split, args.max_shapes)
    extract_res = args.res or DEFAULT_EXTRACT_RES[dataset.dim]
    output_dir = create_output_directory(args.output, prefix="eval")
    print(f"Evaluating {len(args.checkpoint)} model(s) on {len(dataset)} {args.split} shapes")

    rows = []
    configs = {}
    for path in args.checkpoint:
        predictor = load_model(path, dim=dataset.dim)
        if predictor.dim != dataset.dim:
            log_problem(f"{path}: models {predictor.dim}-D shapes, dataset is {dataset.dim}-D; skipped")
            continue
        log_debug(f"Evaluating {path} as {predictor.method}")
        configs[predictor.method] = predictor.cfg.to_dict() if predictor.cfg is not None else None
        rows.extend(evaluate_method(predictor, dataset.records, args, extract_res))

    per_shape = pd.DataFrame(rows, columns=PER_SHAPE_COLUMNS)
    summary = method_summary(per_shape)
    classes = class_summary(per_shape)
    save_metric_log(per_shape, os.path.join(output_dir, "per_shape.csv"))
    save_metric_log(summary, os.path.join(output_dir, "summary.csv"))

    report = generate_summary_report(summary)
    class_report = generate_class_report(classes)
    if class_report:
        report += "\n" + class_report
    save_text_report(report, os.path.join(output_dir, "report.txt"))
    print("\n" + report)

    # Wall-clock fields excluded
    table = summary.drop(columns=["wallclock_median_ms"]).astype(object)
    table = table.where(table.notna(), None)
    class_table = {str(m): {str(c): (None if pd.isna(v) else float(v)) for c, v in row.items()}
                   for m, row in classes.iterrows()} if not classes.empty else {}
    save_json(provenance(
        dataset=os.path.abspath(args.dataset),
        split=args.split,
        checkpoints=[p if p == "oracle" else os.path.abspath(p) for p in args.checkpoint],
        configs=configs,
        runs=args.runs,
        seed=args.seed,
        extract_resolution=extract_res,
        summary=table.to_dict(orient="records"),
        by_class=class_table,
    ), os.path.join(output_dir, "summary.json"))

    finish_run(output_dir, "EVALUATION", {
        "per_shape.csv": "l1 and Chamfer per method, run and shape",
        "summary.csv": "Mean / median / std per method",
        "summary.json": "Summary table with configs and provenance",
        "report.txt": "Text comparison table",
    })
    return 0
