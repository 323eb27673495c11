"""
fit: reconstruct one shape from context with a trained model
"""
import argparse
import os
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from metasdf.commands.common import (
    add_output_argument, context_settings, finish_run, load_split, provenance, require,
)
from metasdf.config import CONTEXT_MODES
from metasdf.data.data_loader import ShapeRecord
from metasdf.data.data_saver import save_grid, save_json, save_metric_log
from metasdf.data.sampling import make_task
from metasdf.errors import ConfigError, SdfDataError
from metasdf.geometry.export import save_contour_json, save_contour_svg, save_obj, save_trajectory_svg
from metasdf.geometry.grid_eval import extract_surface, grid_eval, surface_chamfer
from metasdf.parsers.context_parser import context_to_frame, load_context_csv
from metasdf.training.inference import (
    DEFAULT_EXTRACT_RES, AutoDecoderPredictor, FitResult, Predictor, load_model,
)
from metasdf.utils.file_utils import create_output_directory
from metasdf.utils.text_utils import format_ms


def add_parser(subparsers) -> None:
    parser = subparsers.add_parser("fit", help="Reconstruct one shape from context observations")
    parser.add_argument("--checkpoint", required=True, help="Trained checkpoint")
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--context", help="Context CSV (x0,x1[,x2][,sdf])")
    source.add_argument("--shape", help="Shape id in --dataset to draw context from")
    parser.add_argument("--dataset", help="Dataset directory (with --shape)")
    parser.add_argument("--context-mode", choices=CONTEXT_MODES, help="Override the model's context mode")
    parser.add_argument("--context-n", type=int, help="Context points drawn from the shape")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--best-of", type=int, default=1,
                        help="Fit with this many seeds and keep the lowest-Chamfer reconstruction")
    parser.add_argument("--res", type=int, default=None, help="Extraction grid resolution")
    add_output_argument(parser)
    parser.set_defaults(handler=run)


def _shape_context(predictor: Predictor, record: ShapeRecord, args: argparse.Namespace, seed: int):
    mode, n = context_settings(predictor, args.context_mode, args.context_n)
    task = make_task(record.grid, mode, n, 1, seed=[seed, 0], shape_id=record.shape_id,
                     class_label=record.class_label)
    return task.context_coords, task.context_values


def _score(fit: FitResult, grid, record: Optional[ShapeRecord], coords: np.ndarray, values: np.ndarray,
           seed: int) -> Dict[str, Any]:
    """Chamfer to the true surface when the shape is known, otherwise context l1"""
    if record is not None:
        return {"kind": "chamfer", "value": surface_chamfer(grid, record.grid, seed=seed)}
    return {"kind": "context_l1", "value": float(np.mean(np.abs(fit.predict(coords) - values)))}


def _save_geometry(grid, path_stem: str, title: str) -> List[str]:
    surface = extract_surface(grid)
    if grid.dim == 2:
        save_contour_json(surface, path_stem + ".json")
        save_contour_svg(grid, path_stem + ".svg", title=title)
        return [path_stem + ".json", path_stem + ".svg"]
    save_obj(surface, path_stem + ".obj")
    return [path_stem + ".obj"]


def run(args: argparse.Namespace) -> int:
    if args.best_of < 1:
        raise ConfigError("--best-of must be at least 1")
    predictor = load_model(args.checkpoint)
    record = None
    if args.shape:
        dataset = load_split(require(args.dataset, "--dataset"), "all")
        record = dataset.by_id(args.shape)
        dim = dataset.dim
    else:
        context_coords, context_values = load_context_csv(args.context)
        dim = context_coords.shape[1]
    if predictor.cfg is None:
        raise ConfigError("fit needs a trained checkpoint")
    if dim != predictor.dim:
        raise SdfDataError(f"Context is {dim}-D but the checkpoint models {predictor.dim}-D shapes")
    res = args.res or DEFAULT_EXTRACT_RES[dim]
    output_dir = create_output_directory(args.output, prefix="fit")

    attempts = []
    for attempt in range(args.best_of):
        seed = args.seed + attempt
        if record is not None:
            context_coords, context_values = _shape_context(predictor, record, args, seed)
        fit = predictor.fit(context_coords, context_values, seed=seed, keep_trajectory=True)
        grid = grid_eval(fit.predict, res, dim)
        score = _score(fit, grid, record, context_coords, context_values, seed)
        attempts.append({"seed": seed, "fit": fit, "grid": grid, "score": score,
                         "context": (context_coords, context_values)})
        print(f"Seed {seed}: {predictor.method} fit in {format_ms(fit.wallclock_ms)}, "
              f"{score['kind']} {score['value']:.6f}")

    finite = [a for a in attempts if np.isfinite(a["score"]["value"])]
    best = min(finite, key=lambda a: a["score"]["value"]) if finite else attempts[0]
    fit, grid = best["fit"], best["grid"]

    save_grid(grid, os.path.join(output_dir, "prediction.sdfg"))
    files = _save_geometry(grid, os.path.join(output_dir, "reconstruction"), f"{predictor.method}")
    save_metric_log(context_to_frame(*best["context"]), os.path.join(output_dir, "context.csv"))
    if fit.params is not None:
        save_metric_log(pd.DataFrame({"index": np.arange(fit.params.size), "value": fit.params}),
                        os.path.join(output_dir, "params.csv"))

    if fit.trajectory:
        os.makedirs(os.path.join(output_dir, "trajectory"), exist_ok=True)
        snapshots = [grid_eval(p, res, dim) for p in fit.trajectory]
        for j, snapshot in enumerate(snapshots):
            _save_geometry(snapshot, os.path.join(output_dir, "trajectory", f"step_{j}"), f"step {j}")
        if dim == 2:
            save_trajectory_svg(snapshots, os.path.join(output_dir, "trajectory.svg"))
        print(f"Saved {len(snapshots)} inner-loop snapshots")

    if isinstance(predictor, AutoDecoderPredictor):
        losses = fit.info["code_losses"]
        save_metric_log(pd.DataFrame({"step": np.arange(len(losses)), "loss": losses}),
                        os.path.join(output_dir, "code_search.csv"))
        mean_grid = grid_eval(predictor.mean_shape(), res, dim)
        if mean_grid.has_zero_crossing():
            _save_geometry(mean_grid, os.path.join(output_dir, "mean_shape"), "mean shape")

    timing = provenance(
        predictor.cfg,
        method=predictor.method,
        checkpoint=os.path.abspath(args.checkpoint),
        shape=args.shape,
        context_file=args.context,
        context_points=int(len(best["context"][0])),
        steps=int(fit.info.get("steps", 0)),
        wallclock_ms=fit.wallclock_ms,
        chosen_seed=best["seed"],
        attempts=[{"seed": a["seed"], "score_kind": a["score"]["kind"], "score": a["score"]["value"],
                   "wallclock_ms": a["fit"].wallclock_ms} for a in attempts],
        resolution=res,
    )
    save_json(timing, os.path.join(output_dir, "fit.json"))

    finish_run(output_dir, f"FIT: {predictor.method}", {
        "fit.json": "Timing, inner steps and per-seed scores",
        "prediction.sdfg": "Predicted SDF grid",
        "reconstruction.json": "Zero-level contour polylines",
        "reconstruction.svg": "Contour plot with level sets",
        "reconstruction.obj": "Zero-level mesh",
        "context.csv": "Context observations used",
        "params.csv": "Specialized parameters or latent code",
        "trajectory": "Level set after each inner step",
        "trajectory.svg": "Level sets through the inner loop",
        "code_search.csv": "Latent search loss curve",
        "mean_shape.svg": "Decoder output for the zero code",
        "mean_shape.obj": "Decoder output for the zero code",
    })
    return 0
