"""
train: fit one of the four methods on a dataset
"""
import argparse
import os

from metasdf.commands.common import add_output_argument, finish_run, load_split, require, write_config
from metasdf.config import CONTEXT_MODES, LOSSES, METHODS, POOLINGS
from metasdf.data.data_loader import load_dataset
from metasdf.data.data_saver import save_metric_log, save_text_report
from metasdf.parsers.config_parser import parse_experiment_config
from metasdf.parsers.context_parser import context_to_frame
from metasdf.reports.analytics import curve_summary
from metasdf.reports.report_generator import generate_training_report
from metasdf.training.autodecoder import train_autodecoder
from metasdf.training.cnp import train_cnp
from metasdf.training.common import METRICS_NAME, task_for
from metasdf.training.meta_learner import train_meta
from metasdf.utils.file_utils import create_output_directory, save_input_copy, version_string
from metasdf.utils.logging_utils import log_debug

TRAINERS = {
    "metasdf": train_meta,
    "autodec-concat": train_autodecoder,
    "autodec-hyper": train_autodecoder,
    "cnp": train_cnp,
}

# flag -> config field
OVERRIDES = {
    "dataset": "dataset", "method": "method", "context_mode": "context_mode", "seed": "seed",
    "epochs": "epochs", "max_steps": "max_steps", "batch_tasks": "batch_tasks", "lr": "lr",
    "inner_steps": "inner_steps", "alpha_init": "alpha_init", "hidden_dim": "hidden_dim",
    "num_layers": "num_layers", "latent_dim": "latent_dim", "loss": "loss", "inner_loss": "inner_loss",
    "allow_clamped_inner": "allow_clamped_inner", "first_order": "first_order",
    "per_step_alpha": "per_step_alpha", "context_n": "context_n", "target_n": "target_n",
    "val_count": "val_count", "pooling": "pooling", "encoder_layers": "encoder_layers",
    "code_steps": "code_steps", "code_lr": "code_lr", "code_reg_weight": "code_reg_weight",
}


def add_parser(subparsers) -> None:
    parser = subparsers.add_parser("train", help="Train a model")
    parser.add_argument("--config", help="JSON experiment config; flags override its values")
    parser.add_argument("--dataset", help="Dataset directory")
    parser.add_argument("--method", choices=METHODS)
    parser.add_argument("--context-mode", choices=CONTEXT_MODES)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--max-steps", type=int, help="Stop after this many outer steps")
    parser.add_argument("--batch-tasks", type=int)
    parser.add_argument("--lr", type=float, help="Outer learning rate")
    parser.add_argument("--inner-steps", type=int)
    parser.add_argument("--alpha-init", type=float)
    parser.add_argument("--per-step-alpha", action="store_true", default=None)
    parser.add_argument("--first-order", action="store_true", default=None)
    parser.add_argument("--hidden-dim", type=int)
    parser.add_argument("--num-layers", type=int)
    parser.add_argument("--latent-dim", type=int)
    parser.add_argument("--encoder-layers", type=int)
    parser.add_argument("--pooling", choices=POOLINGS)
    parser.add_argument("--loss", choices=LOSSES)
    parser.add_argument("--inner-loss", choices=LOSSES)
    parser.add_argument("--allow-clamped-inner", action="store_true", default=None)
    parser.add_argument("--context-n", type=int)
    parser.add_argument("--target-n", type=int)
    parser.add_argument("--val-count", type=int)
    parser.add_argument("--code-steps", type=int)
    parser.add_argument("--code-lr", type=float)
    parser.add_argument("--code-reg-weight", type=float)
    parser.add_argument("--resume", help="last.ckpt of an earlier run in the same output directory")
    add_output_argument(parser)
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    overrides = {field: getattr(args, flag) for flag, field in OVERRIDES.items()}
    overrides["output_dir"] = args.output
    cfg = parse_experiment_config(args.config, overrides)
    dataset_dir = require(cfg.dataset, "--dataset")

    train = load_split(dataset_dir, "train")
    val = load_dataset(dataset_dir, splits="val")
    cfg = cfg.resolve(train.dim)
    output_dir = create_output_directory(args.resume and os.path.dirname(args.resume) or cfg.output_dir,
                                         prefix=cfg.method)
    write_config(output_dir, cfg)
    if args.config:
        save_input_copy(output_dir, args.config, "input_config.json")
    print(f"Training {cfg.method} ({cfg.context_mode} context) on {len(train)} shapes, "
          f"{len(val)} validation shapes")

    # Sample of what the model sees for its first shape
    sample = task_for(train.records[0], cfg, cfg.seed, 0, 0)
    save_metric_log(context_to_frame(sample.context_coords, sample.context_values),
                    os.path.join(output_dir, "sample_context.csv"))
    log_debug(f"{sample.shape_id}: {len(sample.context_coords)} context / {len(sample.target_coords)} target points")

    trainer = TRAINERS[cfg.method]
    _, metrics = trainer(train.records, cfg, val.records, output_dir=output_dir, resume_from=args.resume)
    save_metric_log(metrics, os.path.join(output_dir, METRICS_NAME))

    curve = curve_summary(metrics)
    report = generate_training_report(cfg.to_dict(), curve, version_string())
    save_text_report(report, os.path.join(output_dir, "training_report.txt"))
    print("\n" + report)

    finish_run(output_dir, f"TRAINING RUN: {cfg.method}", {
        "config.json": "Resolved experiment config",
        "best.ckpt": "Checkpoint with the best validation metric",
        "last.ckpt": "Checkpoint after the last epoch (resume point)",
        METRICS_NAME: "Per-step outer loss, validation metric and wall-clock",
        "sample_context.csv": "Context samples of the first training task",
        "training_report.txt": "Settings and loss-curve summary",
    })
    return 0
