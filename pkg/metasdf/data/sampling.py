"""
Context/target sampling from SDF grids
"""
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from metasdf.data.sdf_grid import SdfGrid
from metasdf.errors import GeometryError, SdfDataError
from metasdf.geometry.grid_eval import extract_surface
from metasdf.geometry.surface import sample_surface


@dataclass
class Task:
    """
    One shape's split into context (adaptation) and target (scoring) samples

    Index arrays refer to the grid's flattened lattice; level-set context has
    no lattice indices.
    """
    context_coords: np.ndarray
    context_values: np.ndarray
    target_coords: np.ndarray
    target_values: np.ndarray
    shape_id: str = ""
    context_mode: str = "dense"
    class_label: int = -1
    context_indices: Optional[np.ndarray] = None
    target_indices: Optional[np.ndarray] = None

    @property
    def dim(self) -> int:
        return self.context_coords.shape[1]


def sample_dense(grid: SdfGrid, n: Optional[int] = None, seed: Optional[int] = 0) -> Tuple[np.ndarray, np.ndarray]:
    """
    Lattice samples (cell centers paired with grid values)

    Args:
        grid: Source grid
        n: Number of samples without replacement, or None for the whole lattice
        seed: RNG seed

    Returns:
        (coords (n, d), values (n,))
    """
    coords = grid.coords()
    values = grid.values.reshape(-1)
    if n is None:
        return coords, values.copy()
    if n < 0 or n > grid.size:
        raise SdfDataError(f"sample_dense: cannot draw {n} of {grid.size} samples")
    idx = np.random.default_rng(seed).choice(grid.size, size=n, replace=False)
    return coords[idx], values[idx]


def sample_levelset(grid: SdfGrid, n: int, seed: Optional[int] = 0) -> np.ndarray:
    """
    Points on the zero level, uniform by arc length (2D) or area (3D)

    Returns:
        (n, d) coordinates; their sdf value is exactly 0
    """
    if not grid.has_zero_crossing():
        raise SdfDataError("sample_levelset: grid has no zero crossing")
    geometry = extract_surface(grid)
    try:
        return sample_surface(geometry, n, seed)
    except GeometryError as e:
        raise SdfDataError(f"sample_levelset: {e}") from e


def make_task(grid: SdfGrid, context_mode: str = "dense", context_n: Optional[int] = 1024,
              target_n: Optional[int] = 512, seed: Optional[int] = 0, shape_id: str = "",
              class_label: int = -1) -> Task:
    """
    Split one shape into context and target samples

    Dense context and targets come from one permutation of the lattice, so
    they never share a lattice point. With context_n=None (whole lattice) the
    targets are drawn from the full lattice instead. Level-set context is
    sampled on the zero level; targets are always lattice samples.

    Args:
        grid: Shape SDF
        context_mode: 'dense' or 'levelset'
        context_n: Context size, None for the full lattice (dense only)
        target_n: Target size, None for the full lattice
        seed: RNG seed
        shape_id: Identifier carried on the task
        class_label: Class carried on the task

    Returns:
        Task
    """
    coords = grid.coords()
    values = grid.values.reshape(-1)
    total = grid.size
    context_seed, target_seed = np.random.SeedSequence(seed).spawn(2)

    if context_mode == "dense":
        if context_n is None:
            cidx = np.arange(total)
            tidx = np.arange(total) if target_n is None else \
                np.random.default_rng(target_seed).choice(total, size=_check_count(target_n, total), replace=False)
        else:
            tn = total - context_n if target_n is None else target_n
            if context_n <= 0 or tn <= 0 or context_n + tn > total:
                raise SdfDataError(f"make_task: {context_n} context + {tn} target exceed {total} lattice samples")
            order = np.random.default_rng(context_seed).permutation(total)
            cidx, tidx = order[:context_n], order[context_n:context_n + tn]
        return Task(coords[cidx], values[cidx], coords[tidx], values[tidx], shape_id, context_mode,
                    class_label, cidx, tidx)

    if context_mode == "levelset":
        if context_n is None or context_n <= 0:
            raise SdfDataError("make_task: level-set context needs a positive point count")
        context = sample_levelset(grid, context_n, context_seed)
        if target_n is None:
            tidx = np.arange(total)
        else:
            tidx = np.random.default_rng(target_seed).choice(total, size=_check_count(target_n, total), replace=False)
        return Task(context, np.zeros(len(context)), coords[tidx], values[tidx], shape_id, context_mode,
                    class_label, None, tidx)

    raise SdfDataError(f"make_task: unknown context mode '{context_mode}'")


def _check_count(n: int, total: int) -> int:
    if n <= 0 or n > total:
        raise SdfDataError(f"make_task: cannot draw {n} of {total} samples")
    return n
