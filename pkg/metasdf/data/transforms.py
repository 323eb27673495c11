"""
Out-of-distribution raster transforms: rotation and glyph composition

Transforms act on grayscale rasters; SDF extraction happens afterwards.
"""
from typing import List, Sequence, Tuple

import numpy as np
from scipy import ndimage

from metasdf.errors import SdfDataError

Placement = Tuple[int, int, float]  # (top row, left column, scale)


def rotate_image(image: np.ndarray, angle: float) -> np.ndarray:
    """
    Bilinear rotation about the image center, keeping the canvas size

    Args:
        image: 2-D raster in [0, 1]
        angle: Degrees, counter-clockwise
    """
    image = np.asarray(image, dtype=np.float64)
    if float(angle) % 360.0 == 0.0:
        return image.copy()
    rotated = ndimage.rotate(image, angle, reshape=False, order=1, mode="constant", cval=0.0)
    return np.clip(rotated, 0.0, 1.0)


def compose_images(glyphs: Sequence[np.ndarray], placements: Sequence[Placement],
                   canvas_shape: Tuple[int, int]) -> np.ndarray:
    """
    Paste scaled glyphs onto a blank canvas

    Overlaps are merged with a pixelwise max (union).

    Args:
        glyphs: 2-D rasters
        placements: (row, col, scale) per glyph; row/col is the top-left corner
        canvas_shape: Output (H, W)

    Returns:
        Composite raster
    """
    if len(glyphs) != len(placements):
        raise SdfDataError("compose_images: one placement per glyph required")
    canvas = np.zeros(canvas_shape, dtype=np.float64)
    for glyph, (row, col, scale) in zip(glyphs, placements):
        if scale <= 0:
            raise SdfDataError(f"compose_images: scale must be positive, got {scale}")
        small = np.clip(ndimage.zoom(np.asarray(glyph, dtype=np.float64), scale, order=1), 0.0, 1.0)
        h, w = small.shape
        if row < 0 or col < 0 or row + h > canvas_shape[0] or col + w > canvas_shape[1]:
            raise SdfDataError(f"compose_images: placement ({row}, {col}) of a {h}x{w} glyph leaves the canvas")
        canvas[row:row + h, col:col + w] = np.maximum(canvas[row:row + h, col:col + w], small)
    return canvas


def side_by_side(count: int, canvas_shape: Tuple[int, int], glyph_shape: Tuple[int, int]) -> List[Placement]:
    """Placements for `count` glyphs scaled by 1/count in one vertically centered row"""
    scale = 1.0 / count
    h = int(round(glyph_shape[0] * scale))
    w = int(round(glyph_shape[1] * scale))
    row = max(0, (canvas_shape[0] - h) // 2)
    gap = max(0, (canvas_shape[1] - count * w) // (count + 1))
    return [(row, gap + i * (w + gap), scale) for i in range(count)]
