"""
Data loading functions for MetaSDF Shape Lab
"""
import json
import os
import struct
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Tuple, Union

import numpy as np

from metasdf.data.data_saver import CHECKPOINT_MAGIC, GRID_MAGIC, MANIFEST_NAME, MANIFEST_SCHEMA_VERSION
from metasdf.data.sdf_grid import SdfGrid
from metasdf.errors import CheckpointError, SdfDataError
from metasdf.utils.logging_utils import log_debug


def load_grid(path: str) -> SdfGrid:
    """
    Load a grid file written by save_grid

    Args:
        path: Path to the .sdfg file

    Returns:
        SdfGrid (values widened to f64)
    """
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 16 or blob[:4] != GRID_MAGIC:
        raise SdfDataError(f"{path}: not an SDF grid file")
    dims = [d for d in struct.unpack("<3I", blob[4:16]) if d > 0]
    count = int(np.prod(dims))
    if len(blob) != 16 + 4 * count:
        raise SdfDataError(f"{path}: expected {count} values, file has {(len(blob) - 16) // 4}")
    values = np.frombuffer(blob, dtype="<f4", offset=16).astype(np.float64).reshape(dims)
    return SdfGrid(values, meta={"source": os.path.basename(path)})


def load_json(path: str) -> Any:
    with open(path, "r") as f:
        return json.load(f)


def load_manifest(dataset_dir: str) -> Dict[str, Any]:
    """
    Load and check a dataset manifest

    Args:
        dataset_dir: Dataset directory

    Returns:
        Manifest dictionary
    """
    path = os.path.join(dataset_dir, MANIFEST_NAME)
    if not os.path.exists(path):
        raise SdfDataError(f"No {MANIFEST_NAME} in {dataset_dir}")
    manifest = load_json(path)
    if manifest.get("schema_version") != MANIFEST_SCHEMA_VERSION:
        raise SdfDataError(f"{path}: unsupported schema version {manifest.get('schema_version')}")
    return manifest


@dataclass
class ShapeRecord:
    """One manifest entry with its grid"""
    shape_id: str
    class_label: int
    split: str
    grid: SdfGrid
    transform: Dict[str, Any] = field(default_factory=dict)


@dataclass
class Dataset:
    """Loaded (subset of a) shape corpus"""
    root: str
    dim: int
    records: List[ShapeRecord]
    manifest: Dict[str, Any] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def by_id(self, shape_id: str) -> ShapeRecord:
        for record in self.records:
            if record.shape_id == shape_id:
                return record
        raise SdfDataError(f"Shape '{shape_id}' not in dataset {self.root}")

    def ids(self) -> List[str]:
        return [r.shape_id for r in self.records]


def load_dataset(dataset_dir: str, splits: Union[None, str, Iterable[str]] = None,
                 max_shapes: Optional[int] = None) -> Dataset:
    """
    Load shapes from a dataset directory

    Args:
        dataset_dir: Directory holding manifest.json
        splits: Split name(s) to keep ('train', 'val', 'test'); None keeps all
        max_shapes: Keep at most this many shapes (manifest order)

    Returns:
        Dataset
    """
    manifest = load_manifest(dataset_dir)
    if isinstance(splits, str):
        splits = [splits]
    wanted = None if splits is None else set(splits)
    records = []
    for entry in manifest["shapes"]:
        if wanted is not None and entry["split"] not in wanted:
            continue
        if max_shapes is not None and len(records) >= max_shapes:
            break
        grid = load_grid(os.path.join(dataset_dir, entry["path"]))
        label = entry.get("class")
        records.append(ShapeRecord(entry["id"], -1 if label is None else int(label), entry["split"], grid,
                                   entry.get("transform", {})))
    log_debug(f"Loaded {len(records)} shapes from {dataset_dir} (splits={sorted(wanted) if wanted else 'all'})")
    return Dataset(dataset_dir, int(manifest["dim"]), records, manifest)


def load_checkpoint(path: str) -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
    """
    Read a checkpoint container

    Args:
        path: Checkpoint path

    Returns:
        (header, named f64 buffers)
    """
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as e:
        raise CheckpointError(f"Cannot read checkpoint {path}: {e}") from e
    if blob[:8] != CHECKPOINT_MAGIC or len(blob) < 16:
        raise CheckpointError(f"{path}: not a checkpoint file")
    (header_len,) = struct.unpack("<Q", blob[8:16])
    try:
        header = json.loads(blob[16:16 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: corrupt header ({e})") from e
    data = np.frombuffer(blob, dtype="<f8", offset=16 + header_len).astype(np.float64)
    buffers = {}
    for entry in header.get("buffers", []):
        start, length = entry["offset"], entry["length"]
        if start + length > data.size:
            raise CheckpointError(f"{path}: buffer '{entry['name']}' is truncated")
        buffers[entry["name"]] = data[start:start + length].reshape(entry["shape"]).copy()
    return header, buffers


def validate_dataset_dir(dataset_dir: str) -> bool:
    """
    Check that a dataset directory looks usable

    Returns:
        True if the manifest exists, False otherwise
    """
    if not os.path.isdir(dataset_dir):
        print(f"Error: Dataset directory not found at {dataset_dir}")
        return False
    if not os.path.exists(os.path.join(dataset_dir, MANIFEST_NAME)):
        print(f"Error: {MANIFEST_NAME} not found in {dataset_dir}")
        print("Build a dataset first with: metasdf dataset --synthetic glyphs -o <dir>")
        return False
    return True
