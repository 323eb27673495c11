"""
Surface sampling and Chamfer distance
"""
from typing import Optional, Union

import numpy as np
from scipy.spatial import cKDTree

from metasdf.errors import GeometryError
from metasdf.geometry.marching_cubes import Mesh
from metasdf.geometry.marching_squares import Contour

Geometry = Union[Contour, Mesh]


def sample_surface(shape: Geometry, n: int, seed: Optional[int] = 0) -> np.ndarray:
    """
    Draw points uniformly by length (contours) or area (meshes)

    Args:
        shape: Contour or Mesh
        n: Number of points
        seed: RNG seed

    Returns:
        (n, 2) or (n, 3) points
    """
    dim = 2 if isinstance(shape, Contour) else 3
    if n < 0:
        raise GeometryError(f"sample_surface: negative count {n}")
    if n == 0:
        return np.zeros((0, dim))
    if shape.is_empty:
        raise GeometryError("sample_surface: geometry is empty")
    rng = np.random.default_rng(seed)

    if isinstance(shape, Contour):
        segments = shape.segments()
        weights = np.linalg.norm(segments[:, 1] - segments[:, 0], axis=1)
        total = weights.sum()
        if total <= 0:
            raise GeometryError("sample_surface: contour has zero length")
        which = rng.choice(len(segments), size=n, p=weights / total)
        t = rng.uniform(size=(n, 1))
        return segments[which, 0] + t * (segments[which, 1] - segments[which, 0])

    corners = shape.corners()
    weights = shape.areas()
    total = weights.sum()
    if total <= 0:
        raise GeometryError("sample_surface: mesh has zero area")
    which = rng.choice(len(corners), size=n, p=weights / total)
    r1 = np.sqrt(rng.uniform(size=(n, 1)))
    r2 = rng.uniform(size=(n, 1))
    a, b, c = corners[which, 0], corners[which, 1], corners[which, 2]
    return (1.0 - r1) * a + r1 * (1.0 - r2) * b + r1 * r2 * c


def _as_points(points) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    return points


def _nearest_sq_brute(a: np.ndarray, b: np.ndarray, chunk: int = 1024) -> np.ndarray:
    best = np.empty(len(a))
    for start in range(0, len(a), chunk):
        diff = a[start:start + chunk, None, :] - b[None, :, :]
        best[start:start + chunk] = np.sum(diff ** 2, axis=-1).min(axis=1)
    return best


def _nearest_sq_tree(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _, idx = cKDTree(b).query(a, k=1)
    # Recompute with the brute-force formula so both paths agree bit for bit
    return np.sum((a - b[idx]) ** 2, axis=-1)


def chamfer(a, b, accelerate: bool = True) -> float:
    """
    Symmetric Chamfer distance with squared distances and mean aggregation

    Args:
        a: (n, d) points (1-D input is treated as d = 1)
        b: (m, d) points
        accelerate: Use a k-d tree for the nearest-neighbour search

    Returns:
        mean_a min_b |a - b|^2 + mean_b min_a |a - b|^2
    """
    a, b = _as_points(a), _as_points(b)
    if len(a) == 0 or len(b) == 0:
        raise GeometryError("chamfer: empty point set")
    if a.shape[1] != b.shape[1]:
        raise GeometryError(f"chamfer: dimension mismatch {a.shape[1]} vs {b.shape[1]}")
    nearest = _nearest_sq_tree if accelerate else _nearest_sq_brute
    return float(nearest(a, b).mean() + nearest(b, a).mean())
