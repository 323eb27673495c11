"""
export-params: specialized parameter vectors of a MetaSDF model, one row per shape
"""
import argparse
import os

import numpy as np
import pandas as pd

from metasdf.commands.common import (
    add_output_argument, context_settings, finish_run, load_split, provenance, require,
)
from metasdf.config import CONTEXT_MODES
from metasdf.data.data_saver import save_json, save_metric_log
from metasdf.data.sampling import make_task
from metasdf.errors import CheckpointError
from metasdf.training.inference import MetaPredictor, load_model
from metasdf.utils.file_utils import create_output_directory


def add_parser(subparsers) -> None:
    parser = subparsers.add_parser("export-params", help="Export specialized parameter vectors to CSV")
    parser.add_argument("--checkpoint", required=True, help="MetaSDF checkpoint")
    parser.add_argument("--dataset", required=True, help="Dataset directory")
    parser.add_argument("--split", default="all", help="Split to export ('all' for every split)")
    parser.add_argument("--context-mode", choices=CONTEXT_MODES)
    parser.add_argument("--context-n", type=int)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--max-shapes", type=int, default=None)
    add_output_argument(parser)
    parser.set_defaults(handler=run)


def export_params(predictor: MetaPredictor, records, mode: str, n: int, seed: int) -> pd.DataFrame:
    """
    Specialize on every shape and flatten the adapted parameters

    Returns:
        DataFrame with shape_id, class and p0..p{P-1}
    """
    rows = []
    for i, record in enumerate(records):
        task = make_task(record.grid, mode, n, 1, seed=[seed, 0, i], shape_id=record.shape_id,
                         class_label=record.class_label)
        fit = predictor.fit(task.context_coords, task.context_values, seed=seed)
        rows.append(np.asarray(fit.params, dtype=np.float64))
    width = len(rows[0]) if rows else predictor.model.theta.data.size
    params = pd.DataFrame(np.vstack(rows) if rows else np.empty((0, width)),
                          columns=[f"p{j}" for j in range(width)])
    params.insert(0, "class", [r.class_label for r in records])
    params.insert(0, "shape_id", [r.shape_id for r in records])
    return params


def run(args: argparse.Namespace) -> int:
    predictor = load_model(args.checkpoint)
    if not isinstance(predictor, MetaPredictor):
        raise CheckpointError(f"{args.checkpoint}: export-params needs a metasdf checkpoint, "
                              f"got {predictor.method}")
    dataset = load_split(require(args.dataset, "--dataset"), args.split, args.max_shapes)
    mode, n = context_settings(predictor, args.context_mode, args.context_n)
    output_dir = create_output_directory(args.output, prefix="params")

    print(f"Specializing on {len(dataset)} shapes ({mode} context, {n} points)")
    params = export_params(predictor, dataset.records, mode, n, args.seed)
    save_metric_log(params, os.path.join(output_dir, "params.csv"))
    save_json(provenance(predictor.cfg, checkpoint=os.path.abspath(args.checkpoint),
                         dataset=os.path.abspath(args.dataset), split=args.split, context_mode=mode,
                         context_points=n, seed=args.seed, shapes=len(params),
                         param_count=params.shape[1] - 2),
              os.path.join(output_dir, "export.json"))
    print(f"Exported {len(params)} vectors of {params.shape[1] - 2} parameters")

    finish_run(output_dir, "PARAMETER EXPORT", {
        "params.csv": "shape_id, class and the flattened specialized parameters",
        "export.json": "Settings and provenance",
    })
    return 0
