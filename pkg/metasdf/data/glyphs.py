"""
Procedural digit-like glyphs and blob shapes

Glyphs are stroke skeletons for classes 0-9 in unit-square coordinates
(x to the right, y down), randomly distorted per shape and rendered as
anti-aliased thick strokes.
"""
from typing import Dict, List, Optional, Tuple

import numpy as np

from metasdf.errors import SdfDataError

Polyline = List[Tuple[float, float]]


def _arc(cx: float, cy: float, rx: float, ry: float, start: float, stop: float, steps: int = 20) -> Polyline:
    angles = np.radians(np.linspace(start, stop, steps))
    return [(cx + rx * np.cos(a), cy + ry * np.sin(a)) for a in angles]


SKELETONS: Dict[int, List[Polyline]] = {
    0: [_arc(0.5, 0.5, 0.22, 0.32, 0, 360, 32)],
    1: [[(0.38, 0.30), (0.52, 0.18), (0.52, 0.82)]],
    2: [_arc(0.5, 0.36, 0.19, 0.18, 180, 390) + [(0.30, 0.82), (0.72, 0.82)]],
    3: [_arc(0.48, 0.34, 0.17, 0.16, 200, 450), _arc(0.48, 0.66, 0.18, 0.17, 270, 520)],
    4: [[(0.62, 0.82), (0.62, 0.18), (0.28, 0.62), (0.75, 0.62)]],
    5: [[(0.70, 0.18), (0.36, 0.18), (0.35, 0.48)] + _arc(0.5, 0.62, 0.19, 0.19, 220, 510)],
    6: [[(0.66, 0.18), (0.44, 0.34), (0.32, 0.60)], _arc(0.5, 0.64, 0.18, 0.18, 0, 360, 28)],
    7: [[(0.28, 0.18), (0.72, 0.18), (0.42, 0.82)]],
    8: [_arc(0.5, 0.33, 0.15, 0.15, 0, 360, 24), _arc(0.5, 0.66, 0.18, 0.17, 0, 360, 28)],
    9: [_arc(0.5, 0.36, 0.17, 0.17, 0, 360, 28), [(0.67, 0.36), (0.60, 0.82)]],
}

CLASSES = tuple(sorted(SKELETONS))


def _segments(polylines: List[np.ndarray]) -> np.ndarray:
    return np.concatenate([np.stack([p[:-1], p[1:]], axis=1) for p in polylines])


def _pixel_centers(resolution: int) -> np.ndarray:
    """(H*W, 2) pixel centers as (x, y) in the unit square, row-major"""
    c = (np.arange(resolution) + 0.5) / resolution
    ys, xs = np.meshgrid(c, c, indexing="ij")
    return np.stack([xs.reshape(-1), ys.reshape(-1)], axis=1)


def distance_to_segments(points: np.ndarray, segments: np.ndarray) -> np.ndarray:
    """Distance from each point to the nearest of a set of segments"""
    a = segments[:, 0][None]
    ab = (segments[:, 1] - segments[:, 0])[None]
    ap = points[:, None, :] - a
    denom = np.maximum((ab ** 2).sum(-1), 1e-12)
    t = np.clip((ap * ab).sum(-1) / denom, 0.0, 1.0)
    closest = a + t[..., None] * ab
    return np.sqrt(((points[:, None, :] - closest) ** 2).sum(-1)).min(axis=1)


def render_strokes(polylines: List[np.ndarray], resolution: int, radius: float) -> np.ndarray:
    """Thick strokes with a one-pixel anti-aliased edge"""
    d = distance_to_segments(_pixel_centers(resolution), _segments(polylines))
    image = np.clip((radius - d) * resolution + 0.5, 0.0, 1.0)
    return image.reshape(resolution, resolution)


def render_glyph(label: int, resolution: int = 64, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """
    Render one glyph of a class with random distortion

    Args:
        label: Class 0-9
        resolution: Output is resolution x resolution
        rng: Source of distortion; None renders the undistorted skeleton

    Returns:
        Raster in [0, 1], strokes are 1
    """
    if label not in SKELETONS:
        raise SdfDataError(f"No glyph for class {label}")
    strokes = [np.array(p, dtype=np.float64) for p in SKELETONS[label]]
    radius = 0.075
    if rng is not None:
        angle = np.radians(rng.uniform(-12.0, 12.0))
        scale = rng.uniform(0.85, 1.08, size=2)
        shear = rng.uniform(-0.15, 0.15)
        shift = rng.uniform(-0.05, 0.05, size=2)
        rot = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
        matrix = rot @ np.array([[1.0, shear], [0.0, 1.0]]) @ np.diag(scale)
        strokes = [(p - 0.5) @ matrix.T + 0.5 + shift for p in strokes]
        radius = rng.uniform(0.06, 0.09)
    return render_strokes(strokes, resolution, radius)


def render_blob(resolution: int = 64, rng: Optional[np.random.Generator] = None) -> Tuple[np.ndarray, int]:
    """
    Union of 1-4 random ellipses

    Returns:
        (raster, class label = number of lobes)
    """
    rng = rng or np.random.default_rng(0)
    count = int(rng.integers(1, 5))
    points = _pixel_centers(resolution)
    image = np.zeros(len(points))
    for _ in range(count):
        center = rng.uniform(0.32, 0.68, size=2)
        radii = rng.uniform(0.1, 0.24, size=2)
        angle = rng.uniform(0.0, np.pi)
        rot = np.array([[np.cos(angle), np.sin(angle)], [-np.sin(angle), np.cos(angle)]])
        local = (points - center) @ rot.T
        # Approximate distance to the ellipse boundary in pixels
        r = np.sqrt(((local / radii) ** 2).sum(axis=1))
        edge = (1.0 - r) * radii.min() * resolution
        image = np.maximum(image, np.clip(edge + 0.5, 0.0, 1.0))
    return image.reshape(resolution, resolution), count
