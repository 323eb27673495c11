"""
Signed distance grids on the [-1, 1]^d domain
"""
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np
from scipy import ndimage
from scipy.interpolate import RegularGridInterpolator

from metasdf.errors import SdfDataError


def cell_centers(size: int) -> np.ndarray:
    """Cell-center coordinates of a 1-D lattice with `size` cells over [-1, 1]"""
    return -1.0 + (np.arange(size) + 0.5) * (2.0 / size)


def lattice_coords(resolution: Tuple[int, ...]) -> np.ndarray:
    """
    All cell centers of a lattice, in C order of the grid array

    Coordinate j of a point is the position along array axis j.
    """
    axes = [cell_centers(n) for n in resolution]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


@dataclass
class SdfGrid:
    """
    Sampled SDF, negative inside and positive outside, in normalized units

    values[i, j(, k)] is the distance at the cell center lattice_coords gives
    for that index.
    """
    values: np.ndarray
    meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim not in (2, 3):
            raise SdfDataError(f"SdfGrid must be 2D or 3D, got shape {self.values.shape}")
        if min(self.values.shape) < 2:
            raise SdfDataError(f"SdfGrid too small: {self.values.shape}")

    @property
    def dim(self) -> int:
        return self.values.ndim

    @property
    def resolution(self) -> Tuple[int, ...]:
        return tuple(self.values.shape)

    @property
    def extent(self) -> Tuple[float, float]:
        return (-1.0, 1.0)

    @property
    def cell_width(self) -> float:
        return 2.0 / max(self.resolution)

    @property
    def size(self) -> int:
        return int(self.values.size)

    def coords(self) -> np.ndarray:
        return lattice_coords(self.resolution)

    def has_zero_crossing(self) -> bool:
        return bool(self.values.min() < 0.0 <= self.values.max())

    def interpolator(self) -> RegularGridInterpolator:
        """Multilinear interpolation, extrapolating outside the outermost cell centers"""
        axes = tuple(cell_centers(n) for n in self.resolution)
        return RegularGridInterpolator(axes, self.values, method="linear", bounds_error=False, fill_value=None)

    def sample(self, points: np.ndarray) -> np.ndarray:
        return self.interpolator()(np.asarray(points, dtype=np.float64))


def raster_to_sdf(image: np.ndarray, threshold: float = 0.5) -> SdfGrid:
    """
    Signed distance grid from a grayscale raster via two distance transforms

    Args:
        image: 2-D (or 3-D occupancy) array with values in [0, 1]
        threshold: Pixels >= threshold are foreground (inside)

    Returns:
        SdfGrid with (d_out - d_in) * 2 / max(shape)
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim not in (2, 3):
        raise SdfDataError(f"raster_to_sdf expects a 2-D image, got shape {image.shape}")
    if not np.isfinite(image).all():
        raise SdfDataError("raster_to_sdf: image contains non-finite values")
    foreground = image >= threshold
    if foreground.all():
        raise SdfDataError("raster_to_sdf: image is all foreground, no zero level set")
    if not foreground.any():
        raise SdfDataError("raster_to_sdf: image is all background, no zero level set")
    # Exact Euclidean transforms: distance of each background pixel to the
    # nearest foreground pixel and vice versa
    d_out = ndimage.distance_transform_edt(~foreground)
    d_in = ndimage.distance_transform_edt(foreground)
    sdf = (d_out - d_in) * (2.0 / max(image.shape))
    return SdfGrid(sdf, meta={"source": "raster", "threshold": float(threshold)})


def grid_from_function(fn, resolution: Tuple[int, ...], meta: Optional[Dict[str, Any]] = None) -> SdfGrid:
    """Evaluate fn(points) -> values at the cell centers of a lattice"""
    values = np.asarray(fn(lattice_coords(resolution)), dtype=np.float64).reshape(resolution)
    return SdfGrid(values, meta=dict(meta or {}))


def eikonal_fraction(grid: SdfGrid, band: float = 2.0, low: float = 0.8, high: float = 1.2) -> float:
    """
    Fraction of cells away from the zero level whose central-difference
    gradient magnitude lies in [low, high]

    Args:
        grid: Grid to check
        band: Cells closer than band cell widths to the zero level are skipped
    """
    h = grid.cell_width
    grads = np.gradient(grid.values, h)
    grads = [grads] if grid.dim == 1 else list(grads)
    magnitude = np.sqrt(sum(g ** 2 for g in grads))
    interior = [slice(1, -1)] * grid.dim
    far = np.abs(grid.values) > band * h
    mask = np.zeros_like(far)
    mask[tuple(interior)] = far[tuple(interior)]
    if not mask.any():
        return 1.0
    ok = (magnitude >= low) & (magnitude <= high)
    return float(ok[mask].mean())
