"""
Shape corpus construction: synthetic glyphs, blobs, analytic 3D shapes and
user-supplied rasters, written as a dataset directory
"""
import dataclasses
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from metasdf import config
from metasdf.data.data_saver import save_grid, save_manifest
from metasdf.data.glyphs import CLASSES, render_blob, render_glyph
from metasdf.data.sdf_grid import SdfGrid, grid_from_function, raster_to_sdf
from metasdf.data.shapes3d import analytic_sdf, random_shape3d, shape_has_surface
from metasdf.data.transforms import compose_images, rotate_image, side_by_side
from metasdf.errors import ConfigError, SdfDataError
from metasdf.parsers.raster_parser import find_rasters, load_pgm
from metasdf.utils.logging_utils import log_debug, log_problem
from metasdf.utils.file_utils import version_string
from metasdf.utils.text_utils import shape_id

KINDS = ("glyphs", "blobs", "shapes3d", "raster")
VARIANTS = ("none", "rotate", "compose2", "compose3")
SPLITS = ("train", "val", "test")
GRID_DIR = "grids"


@dataclass
class CorpusSpec:
    """Generator settings; serialized into the manifest"""
    kind: str = "glyphs"
    count: int = 256
    resolution: int = 64
    classes: List[int] = field(default_factory=lambda: list(CLASSES))
    holdout_classes: List[int] = field(default_factory=list)
    variant: str = "none"
    seed: int = 0
    val_count: Optional[int] = None
    test_fraction: float = 0.1
    split: Optional[str] = None
    max_shapes: Optional[int] = None
    raster_dir: Optional[str] = None
    threshold: float = 0.5

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"Unknown corpus kind '{self.kind}', expected one of {', '.join(KINDS)}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"Unknown variant '{self.variant}', expected one of {', '.join(VARIANTS)}")
        if self.kind == "raster" and not self.raster_dir:
            raise ConfigError("Raster corpus needs a raster directory")
        if self.kind != "raster" and self.count <= 0:
            raise ConfigError("count must be positive")
        if self.resolution < 8:
            raise ConfigError("resolution must be at least 8")
        if self.kind == "shapes3d" and self.variant != "none":
            raise ConfigError("Variants apply to 2-D corpora only")
        if self.kind == "glyphs" and not self.classes:
            raise ConfigError("No glyph classes selected")
        if self.split is not None and self.split not in SPLITS:
            raise ConfigError(f"Unknown split '{self.split}'")
        if not 0.0 <= self.test_fraction < 1.0:
            raise ConfigError("test_fraction must be in [0, 1)")

    @property
    def dim(self) -> int:
        return 3 if self.kind == "shapes3d" else 2

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


def _glyph_image(spec: CorpusSpec, index: int, rng: np.random.Generator) -> Tuple[np.ndarray, int, Dict[str, Any]]:
    res = spec.resolution
    if spec.variant in ("compose2", "compose3"):
        count = 2 if spec.variant == "compose2" else 3
        labels = [int(spec.classes[rng.integers(len(spec.classes))]) for _ in range(count)]
        glyphs = [render_glyph(label, res, rng) for label in labels]
        placements = side_by_side(count, (res, res), (res, res))
        image = compose_images(glyphs, placements, (res, res))
        return image, -1, {"kind": "compose", "classes": labels,
                           "placements": [[int(r), int(c), float(s)] for r, c, s in placements]}
    label = int(spec.classes[index % len(spec.classes)])
    image = render_glyph(label, res, rng)
    return image, label, {}


def _make_shape(spec: CorpusSpec, index: int, seed: np.random.SeedSequence,
                raster: Optional[Tuple[str, int]]) -> Tuple[SdfGrid, int, Dict[str, Any]]:
    rng = np.random.default_rng(seed)
    if spec.kind == "shapes3d":
        for _ in range(20):
            shape, label = random_shape3d(rng)
            if shape_has_surface(shape):
                break
        else:
            raise SdfDataError(f"Shape {index}: no surface after 20 draws")
        grid = grid_from_function(lambda p: analytic_sdf(shape, p), (spec.resolution,) * 3)
        return grid, label, {"kind": "analytic", "spec": shape.to_dict()}

    if spec.kind == "glyphs":
        image, label, transform = _glyph_image(spec, index, rng)
    elif spec.kind == "blobs":
        image, label = render_blob(spec.resolution, rng)
        transform = {}
    else:
        path, label = raster
        image = load_pgm(path)
        transform = {"source": os.path.basename(path)}

    if spec.variant == "rotate":
        angle = float(rng.uniform(0.0, 360.0))
        image = rotate_image(image, angle)
        transform = dict(transform, kind="rotate", angle=angle)
    return raster_to_sdf(image, spec.threshold), label, transform


def assign_splits(labels: List[int], spec: CorpusSpec) -> List[str]:
    """
    Split assignment

    Held-out classes go to test. Without a holdout, a test_fraction of the
    shapes is drawn for test. A validation set (val_count, at most a tenth of
    what remains) is drawn from the rest.
    """
    n = len(labels)
    if spec.split is not None:
        return [spec.split] * n
    splits = ["train"] * n
    holdout = set(spec.holdout_classes)
    remaining = []
    for i, label in enumerate(labels):
        if label in holdout:
            splits[i] = "test"
        else:
            remaining.append(i)
    order = np.random.default_rng(spec.seed).permutation(len(remaining))
    pool = [remaining[k] for k in order]
    if not holdout:
        n_test = int(round(spec.test_fraction * len(pool)))
        for i in pool[:n_test]:
            splits[i] = "test"
        pool = pool[n_test:]
    default_val = config.VAL_COUNT_3D if spec.dim == 3 else config.VAL_COUNT_2D
    n_val = min(default_val if spec.val_count is None else spec.val_count, len(pool) // 10)
    for i in pool[:n_val]:
        splits[i] = "val"
    return splits


def build_corpus(spec: CorpusSpec, dataset_dir: str) -> Dict[str, Any]:
    """
    Generate every shape, write the grids and the manifest

    Shapes get independent child seeds, so the output does not depend on the
    number of worker threads.

    Args:
        spec: Generator settings
        dataset_dir: Output directory

    Returns:
        The manifest dictionary
    """
    spec.validate()
    rasters = find_rasters(spec.raster_dir) if spec.kind == "raster" else None
    count = len(rasters) if rasters is not None else spec.count
    if spec.max_shapes is not None:
        count = min(count, spec.max_shapes)
    seeds = np.random.SeedSequence(spec.seed).spawn(count)
    os.makedirs(os.path.join(dataset_dir, GRID_DIR), exist_ok=True)

    def work(index: int):
        try:
            grid, label, transform = _make_shape(spec, index, seeds[index],
                                                 rasters[index] if rasters is not None else None)
        except SdfDataError as e:
            log_problem(f"Skipping shape {index}: {e}")
            return None
        relpath = f"{GRID_DIR}/{shape_id(index)}.sdfg"
        save_grid(grid, os.path.join(dataset_dir, relpath))
        return index, grid, label, transform, relpath

    with ThreadPoolExecutor(max_workers=config.THREADS) as pool:
        results = [r for r in pool.map(work, range(count)) if r is not None]

    labels = [label for _, _, label, _, _ in results]
    splits = assign_splits(labels, spec)
    shapes = []
    for (index, grid, label, transform, relpath), split in zip(results, splits):
        shapes.append({
            "id": shape_id(index),
            "class": int(label),
            "split": split,
            "resolution": list(grid.resolution),
            "transform": transform,
            "path": relpath,
        })
    manifest = {
        "dim": spec.dim,
        "generator": spec.to_dict(),
        "resolution": list(results[0][1].resolution) if results else [],
        "shapes": shapes,
        "counts": {s: splits.count(s) for s in SPLITS},
        "version": version_string(),
    }
    log_debug(f"Corpus {spec.kind}/{spec.variant}: {manifest['counts']}")
    save_manifest(manifest, dataset_dir)
    return manifest
