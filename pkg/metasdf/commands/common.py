"""
Helpers shared by the command modules
"""
import argparse
import os
from typing import Any, Dict, List, Optional, Sequence, Tuple

from metasdf import config
from metasdf.config import ExperimentConfig
from metasdf.data.data_loader import Dataset, ShapeRecord, load_dataset, validate_dataset_dir
from metasdf.data.data_saver import save_json
from metasdf.errors import ConfigError, SdfDataError
from metasdf.training.inference import Predictor
from metasdf.utils.file_utils import create_readme, version_string
from metasdf.utils.logging_utils import save_debug_log, save_problem_cases

DEFAULT_CONTEXT_POINTS = {"dense": config.DENSE_CONTEXT_POINTS, "levelset": config.LEVELSET_CONTEXT_POINTS}


def add_output_argument(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--output", "-o", default=None,
                        help="Output directory (default: a timestamped folder under Results/)")


def require(value: Any, flag: str) -> Any:
    if value is None or value == "":
        raise ConfigError(f"{flag} is required")
    return value


def load_split(dataset_dir: str, split: Optional[str], max_shapes: Optional[int] = None) -> Dataset:
    """Shapes of one split ('all' or None for every split)"""
    if not validate_dataset_dir(dataset_dir):
        raise SdfDataError(f"Not a dataset directory: {dataset_dir}")
    splits = None if split in (None, "all") else split
    dataset = load_dataset(dataset_dir, splits=splits, max_shapes=max_shapes)
    if not dataset.records:
        raise SdfDataError(f"No shapes in split '{split}' of {dataset_dir}")
    return dataset


def select_shapes(records: Sequence[ShapeRecord], shape_ids: Optional[List[str]]) -> List[ShapeRecord]:
    if not shape_ids:
        return list(records)
    by_id = {r.shape_id: r for r in records}
    missing = [sid for sid in shape_ids if sid not in by_id]
    if missing:
        raise SdfDataError(f"Shapes not found: {', '.join(missing)}")
    return [by_id[sid] for sid in shape_ids]


def provenance(cfg: Optional[ExperimentConfig] = None, **extra: Any) -> Dict[str, Any]:
    """Block embedded in every JSON artifact"""
    block: Dict[str, Any] = {"version": version_string()}
    if cfg is not None:
        block["config"] = cfg.to_dict()
    block.update(extra)
    return block


def write_config(output_dir: str, cfg: ExperimentConfig) -> str:
    path = os.path.join(output_dir, "config.json")
    save_json(provenance(cfg), path)
    return path


def finish_run(output_dir: str, title: str, files: Dict[str, str]) -> None:
    """Flush the debug/problem logs and write the README"""
    save_debug_log(output_dir)
    save_problem_cases(output_dir)
    create_readme(output_dir, title, files)


def context_settings(predictor: Predictor, mode: Optional[str] = None, n: Optional[int] = None) -> Tuple[str, int]:
    """Context mode and size for a predictor, honouring command-line overrides"""
    cfg = predictor.cfg
    mode = mode or (cfg.context_mode if cfg is not None else "dense")
    if n is not None:
        return mode, n
    if cfg is not None and mode == cfg.context_mode:
        return mode, cfg.context_n
    return mode, DEFAULT_CONTEXT_POINTS[mode]
