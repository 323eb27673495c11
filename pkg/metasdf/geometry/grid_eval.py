"""
Evaluate a predictor on a regular lattice
"""
from typing import Callable, Optional, Sequence, Union

import numpy as np

from metasdf import config
from metasdf.autodiff import no_grad
from metasdf.data.sdf_grid import SdfGrid, lattice_coords
from metasdf.errors import NonFiniteError
from metasdf.geometry.marching_cubes import marching_cubes
from metasdf.geometry.marching_squares import marching_squares
from metasdf.geometry.surface import Geometry, chamfer, sample_surface
from metasdf.training.losses import predictions_to_sdf
from metasdf.utils.logging_utils import log_problem

Predictor = Callable[[np.ndarray], np.ndarray]


def grid_eval(predictor: Predictor, resolution: Union[int, Sequence[int]], dim: int = 2,
              batch_size: int = 8192) -> SdfGrid:
    """
    Evaluate a predictor at the cell centers of a [-1, 1]^d lattice

    Args:
        predictor: Maps (n, d) points to (n,) values or (n, 2) two-headed outputs,
            which are combined into signed distances
        resolution: Cells per axis (int) or a full shape
        dim: Dimension when resolution is an int
        batch_size: Points per predictor call

    Returns:
        SdfGrid of predicted values
    """
    shape = (int(resolution),) * dim if np.isscalar(resolution) else tuple(int(r) for r in resolution)
    coords = lattice_coords(shape)
    values = np.empty(len(coords))
    with no_grad():
        for start in range(0, len(coords), batch_size):
            chunk = coords[start:start + batch_size]
            values[start:start + len(chunk)] = predictions_to_sdf(predictor(chunk))
    bad = ~np.isfinite(values)
    if bad.any():
        locations = coords[bad][:10]
        raise NonFiniteError(f"grid_eval: {int(bad.sum())} non-finite prediction(s), first at {locations[0].tolist()}",
                             locations=locations)
    return SdfGrid(values.reshape(shape), meta={"source": "prediction"})


def extract_surface(grid: SdfGrid, iso: float = 0.0) -> Geometry:
    """Zero-level contour (2-D grids) or mesh (3-D grids)"""
    if grid.dim == 2:
        return marching_squares(grid, iso)
    return marching_cubes(grid, iso)


def surface_chamfer(predicted: SdfGrid, truth: SdfGrid, n: int = config.CHAMFER_SAMPLES,
                    seed: Optional[int] = 0) -> float:
    """
    Chamfer distance between the zero levels of two grids

    Returns NaN (and notes a problem) when either grid has no surface.
    """
    surfaces = [extract_surface(predicted), extract_surface(truth)]
    if any(s.is_empty for s in surfaces):
        log_problem("surface_chamfer: a grid has no zero crossing; Chamfer distance undefined")
        return float("nan")
    a = sample_surface(surfaces[0], n, seed)
    b = sample_surface(surfaces[1], n, None if seed is None else seed + 1)
    return chamfer(a, b)
