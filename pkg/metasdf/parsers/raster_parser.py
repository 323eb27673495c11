"""
Parser for portable graymap (PGM) rasters
"""
import os
import re
from typing import List, Tuple

import numpy as np

from metasdf.errors import SdfDataError
from metasdf.utils.text_utils import extract_class_label

_TOKEN = re.compile(rb"(#[^\n]*\n?)|(\S+)")


def _header_tokens(blob: bytes, count: int) -> Tuple[List[bytes], int]:
    """First `count` whitespace-separated header tokens, skipping comments"""
    tokens = []
    pos = 0
    while len(tokens) < count:
        match = _TOKEN.search(blob, pos)
        if match is None:
            raise SdfDataError("PGM header is truncated")
        pos = match.end()
        if match.group(2) is not None:
            tokens.append(match.group(2))
    return tokens, pos


def parse_pgm(blob: bytes) -> np.ndarray:
    """
    Decode a P2 (ASCII) or P5 (binary) graymap

    Args:
        blob: File contents

    Returns:
        2-D float array scaled to [0, 1]
    """
    tokens, pos = _header_tokens(blob, 4)
    magic = tokens[0]
    try:
        width, height, maxval = (int(t) for t in tokens[1:4])
    except ValueError:
        raise SdfDataError("PGM header has non-integer fields") from None
    if width <= 0 or height <= 0 or not 0 < maxval < 65536:
        raise SdfDataError(f"PGM header out of range: {width}x{height}, maxval {maxval}")
    if magic == b"P5":
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        start = pos + 1 if blob[pos:pos + 1].isspace() else pos
        count = width * height
        if len(blob) - start < count * dtype.itemsize:
            raise SdfDataError("PGM pixel data is truncated")
        raw = np.frombuffer(blob, dtype=dtype, count=count, offset=start)
    elif magic == b"P2":
        body = re.sub(rb"#[^\n]*", b"", blob[pos:]).split()
        if len(body) < width * height:
            raise SdfDataError("PGM pixel data is truncated")
        raw = np.array([int(v) for v in body[:width * height]])
    else:
        raise SdfDataError(f"Unsupported graymap type {magic!r}")
    return raw.reshape(height, width).astype(np.float64) / maxval


def load_pgm(path: str) -> np.ndarray:
    with open(path, "rb") as f:
        return parse_pgm(f.read())


def find_rasters(raster_dir: str) -> List[Tuple[str, int]]:
    """
    List PGM files named '<class>_<anything>.pgm' in a directory

    Returns:
        Sorted (path, class label) pairs; files without a label get -1
    """
    found = []
    for name in sorted(os.listdir(raster_dir)):
        if not name.lower().endswith(".pgm"):
            continue
        label = extract_class_label(name)
        found.append((os.path.join(raster_dir, name), -1 if label is None else label))
    if not found:
        raise SdfDataError(f"No .pgm files in {raster_dir}")
    return found


def image_to_pgm(image: np.ndarray) -> bytes:
    """Encode a [0, 1] image as binary P5 (used for raster fixtures and exports)"""
    image = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    height, width = image.shape
    pixels = np.round(image * 255).astype(np.uint8)
    return f"P5\n{width} {height}\n255\n".encode("ascii") + pixels.tobytes()
