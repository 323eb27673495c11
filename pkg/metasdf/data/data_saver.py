"""
Data saving functions for MetaSDF Shape Lab

Every file goes through a temporary sibling and a rename, so readers never
see half-written grids, manifests or checkpoints.
"""
import json
import os
import struct
from typing import Any, Dict

import numpy as np
import pandas as pd

from metasdf.data.sdf_grid import SdfGrid
from metasdf.utils.file_utils import atomic_write_bytes, atomic_write_text

GRID_MAGIC = b"SDFG"
CHECKPOINT_MAGIC = b"MSDFCKPT"
MANIFEST_NAME = "manifest.json"
MANIFEST_SCHEMA_VERSION = 1


def _json_default(value: Any):
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def to_json(payload: Any) -> str:
    """Sorted keys, two-space indent, trailing newline"""
    return json.dumps(payload, sort_keys=True, indent=2, default=_json_default) + "\n"


def save_json(payload: Any, path: str) -> None:
    atomic_write_text(path, to_json(payload))


def grid_to_bytes(grid: SdfGrid) -> bytes:
    dims = list(grid.resolution) + [0] * (3 - grid.dim)
    header = GRID_MAGIC + struct.pack("<3I", *dims)
    return header + np.ascontiguousarray(grid.values, dtype="<f4").tobytes()


def save_grid(grid: SdfGrid, path: str) -> None:
    """
    Save a grid as 16-byte header ('SDFG' + three u32 dims, 2-D grids use
    (H, W, 0)) followed by little-endian f32 values in C order
    """
    atomic_write_bytes(path, grid_to_bytes(grid))


def save_manifest(manifest: Dict[str, Any], dataset_dir: str) -> str:
    """
    Save a dataset manifest

    Args:
        manifest: Manifest dictionary (schema_version, dim, shapes, ...)
        dataset_dir: Dataset directory

    Returns:
        Path of the manifest file
    """
    manifest = dict(manifest)
    manifest.setdefault("schema_version", MANIFEST_SCHEMA_VERSION)
    path = os.path.join(dataset_dir, MANIFEST_NAME)
    save_json(manifest, path)
    print(f"Saved manifest with {len(manifest.get('shapes', []))} shapes to {path}")
    return path


def save_checkpoint(header: Dict[str, Any], buffers: Dict[str, np.ndarray], path: str) -> None:
    """
    Save a checkpoint container

    Layout: 'MSDFCKPT', u64 header length, JSON header, then the named
    buffers as little-endian f64 in the order listed under header['buffers'].

    Args:
        header: JSON-serializable metadata (config, epoch, metric, ...)
        buffers: Named arrays
        path: Output path
    """
    table = []
    offset = 0
    payload = []
    for name in sorted(buffers):
        array = np.ascontiguousarray(buffers[name], dtype="<f8")
        table.append({"name": name, "shape": list(array.shape), "offset": offset, "length": int(array.size)})
        payload.append(array.tobytes())
        offset += array.size
    header = dict(header)
    header["buffers"] = table
    header_bytes = json.dumps(header, sort_keys=True, default=_json_default).encode("utf-8")
    blob = CHECKPOINT_MAGIC + struct.pack("<Q", len(header_bytes)) + header_bytes + b"".join(payload)
    atomic_write_bytes(path, blob)


def save_metric_log(log_df: pd.DataFrame, path: str) -> None:
    """Save a metric table as CSV"""
    atomic_write_text(path, log_df.to_csv(index=False))
    print(f"Saved {len(log_df)} rows to {path}")


def save_text_report(report_text: str, path: str) -> None:
    """
    Save a text report

    Args:
        report_text: Report to save
        path: Output path
    """
    atomic_write_text(path, report_text)
    print(f"Saved report to {path}")
