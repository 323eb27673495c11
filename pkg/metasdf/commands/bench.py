"""
bench: inference wall-clock per method with ratio tables
"""
import argparse
import os

import pandas as pd

from metasdf.commands.common import (
    add_output_argument, context_settings, finish_run, load_split, provenance, require, select_shapes,
)
from metasdf.data.data_saver import save_json, save_metric_log, save_text_report
from metasdf.data.sampling import make_task
from metasdf.errors import ConfigError
from metasdf.reports.analytics import ratio_table, timing_summary
from metasdf.reports.report_generator import generate_bench_report
from metasdf.training.inference import ORACLE, load_model
from metasdf.utils.file_utils import create_output_directory
from metasdf.utils.text_utils import format_ms

TIMING_COLUMNS = ["method", "shape_id", "repeat", "wallclock_ms", "steps"]


def add_parser(subparsers) -> None:
    parser = subparsers.add_parser("bench", help="Time single-shape inference for each method")
    parser.add_argument("--checkpoint", action="append", required=True, help="Checkpoint to time (repeatable)")
    parser.add_argument("--dataset", required=True, help="Dataset directory")
    parser.add_argument("--split", default="test")
    parser.add_argument("--shapes", default=None, help="Comma-separated shape ids (default: first --count shapes)")
    parser.add_argument("--count", type=int, default=5, help="Shapes timed when --shapes is not given")
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--warmup", type=int, default=1, help="Untimed fits before measuring each method")
    parser.add_argument("--reference", default="metasdf", help="Method the ratios are taken against")
    parser.add_argument("--seed", type=int, default=0)
    add_output_argument(parser)
    parser.set_defaults(handler=run)


def time_method(predictor, records, repeats: int, warmup: int, seed: int) -> pd.DataFrame:
    """Fit every shape `repeats` times; one row per fit"""
    mode, n = context_settings(predictor)
    tasks = [make_task(r.grid, mode, n, 1, seed=[seed, 0, i], shape_id=r.shape_id)
             for i, r in enumerate(records)]
    for _ in range(warmup):
        predictor.fit(tasks[0].context_coords, tasks[0].context_values, seed=seed, grid=records[0].grid)
    rows = []
    for task, record in zip(tasks, records):
        for repeat in range(repeats):
            fit = predictor.fit(task.context_coords, task.context_values, seed=seed, grid=record.grid)
            rows.append({"method": predictor.method, "shape_id": record.shape_id, "repeat": repeat,
                         "wallclock_ms": fit.wallclock_ms, "steps": int(fit.info.get("steps", 0))})
    return pd.DataFrame(rows, columns=TIMING_COLUMNS)


def run(args: argparse.Namespace) -> int:
    if args.repeats < 1:
        raise ConfigError("--repeats must be at least 1")
    if any(path == ORACLE for path in args.checkpoint):
        raise ConfigError("bench times trained checkpoints only")
    dataset = load_split(require(args.dataset, "--dataset"), args.split)
    shape_ids = [s.strip() for s in args.shapes.split(",") if s.strip()] if args.shapes else None
    records = select_shapes(dataset.records, shape_ids)
    if not shape_ids:
        records = records[:args.count]
    output_dir = create_output_directory(args.output, prefix="bench")
    print(f"Timing {len(args.checkpoint)} model(s) on {len(records)} shapes x {args.repeats} repeats")

    frames = []
    for path in args.checkpoint:
        predictor = load_model(path)
        timing = time_method(predictor, records, args.repeats, args.warmup, args.seed)
        frames.append(timing)
        print(f"  {predictor.method}: median {format_ms(timing['wallclock_ms'].median())}")

    timing_df = pd.concat(frames, ignore_index=True)
    summary = timing_summary(timing_df, reference=args.reference)
    ratios = ratio_table(summary)
    save_metric_log(timing_df, os.path.join(output_dir, "timing.csv"))
    save_metric_log(summary, os.path.join(output_dir, "timing_summary.csv"))
    save_metric_log(ratios.rename_axis("method").reset_index(), os.path.join(output_dir, "ratios.csv"))

    report = generate_bench_report(summary, args.reference)
    save_text_report(report, os.path.join(output_dir, "report.txt"))
    print("\n" + report)

    save_json(provenance(
        dataset=os.path.abspath(args.dataset),
        checkpoints=[os.path.abspath(p) for p in args.checkpoint],
        shapes=[r.shape_id for r in records],
        repeats=args.repeats,
        reference=args.reference,
        summary=summary.astype(object).where(summary.notna(), None).to_dict(orient="records"),
    ), os.path.join(output_dir, "bench.json"))

    finish_run(output_dir, "INFERENCE BENCHMARK", {
        "timing.csv": "Wall-clock of every fit",
        "timing_summary.csv": "Median / mean / min / max per method",
        "ratios.csv": "Pairwise median-time ratios",
        "bench.json": "Summary with provenance",
        "report.txt": "Text timing table",
    })
    return 0
