"""
Marching squares over a 2-D SDF grid
"""
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from metasdf.data.sdf_grid import SdfGrid, cell_centers
from metasdf.errors import GeometryError

# Cell corners c0..c3 sit at (i, j), (i+1, j), (i+1, j+1), (i, j+1); edge e
# joins corner e and corner (e + 1) % 4. Entries are pairs of crossed edges.
SEGMENT_TABLE: Dict[int, Tuple[Tuple[int, int], ...]] = {
    0: (),
    1: ((3, 0),),
    2: ((0, 1),),
    3: ((3, 1),),
    4: ((1, 2),),
    6: ((0, 2),),
    7: ((3, 2),),
    8: ((2, 3),),
    9: ((0, 2),),
    11: ((1, 2),),
    12: ((1, 3),),
    13: ((0, 1),),
    14: ((3, 0),),
    15: (),
}

# Saddles: (center inside, center outside)
SADDLE_TABLE = {
    5: (((0, 1), (2, 3)), ((3, 0), (1, 2))),
    10: (((3, 0), (1, 2)), ((0, 1), (2, 3))),
}

CORNER_OFFSETS = ((0, 0), (1, 0), (1, 1), (0, 1))


@dataclass
class Contour:
    """Polylines of the zero level; closed loops repeat their first point at the end"""
    polylines: List[np.ndarray] = field(default_factory=list)
    closed: List[bool] = field(default_factory=list)

    @property
    def is_empty(self) -> bool:
        return not self.polylines

    def __len__(self) -> int:
        return len(self.polylines)

    def points(self) -> np.ndarray:
        if not self.polylines:
            return np.zeros((0, 2))
        return np.concatenate(self.polylines)

    def segments(self) -> np.ndarray:
        """(S, 2, 2) consecutive point pairs over all polylines"""
        parts = [np.stack([p[:-1], p[1:]], axis=1) for p in self.polylines if len(p) > 1]
        if not parts:
            return np.zeros((0, 2, 2))
        return np.concatenate(parts)

    def lengths(self) -> np.ndarray:
        """Length of every polyline"""
        return np.array([np.linalg.norm(np.diff(p, axis=0), axis=1).sum() for p in self.polylines])

    def to_dict(self) -> Dict[str, list]:
        return {
            "polylines": [p.tolist() for p in self.polylines],
            "closed": list(self.closed),
        }


def _edge_point(values: np.ndarray, axes, a: Tuple[int, int], b: Tuple[int, int], iso: float) -> np.ndarray:
    va, vb = values[a], values[b]
    t = (iso - va) / (vb - va)
    pa = np.array([axes[0][a[0]], axes[1][a[1]]])
    pb = np.array([axes[0][b[0]], axes[1][b[1]]])
    return pa + t * (pb - pa)


def marching_squares(grid: SdfGrid, iso: float = 0.0) -> Contour:
    """
    Extract iso-contours of a 2-D grid

    Crossings are linearly interpolated along lattice edges. The two saddle
    cases are resolved with the mean of the four corners. Segments are joined
    through shared lattice edges into polylines.

    Args:
        grid: 2-D SdfGrid
        iso: Iso value; corners with value < iso are inside

    Returns:
        Contour (empty when nothing crosses)
    """
    if grid.dim != 2:
        raise GeometryError(f"marching_squares needs a 2-D grid, got {grid.dim}-D")
    values = grid.values
    height, width = values.shape
    axes = (cell_centers(height), cell_centers(width))
    inside = (values < iso).astype(np.int64)
    case = (inside[:-1, :-1] | (inside[1:, :-1] << 1) | (inside[1:, 1:] << 2) | (inside[:-1, 1:] << 3))

    total = values.size
    points: Dict[int, np.ndarray] = {}
    neighbours: Dict[int, List[int]] = defaultdict(list)

    def edge_key(i: int, j: int, edge: int) -> int:
        a = (i + CORNER_OFFSETS[edge][0], j + CORNER_OFFSETS[edge][1])
        b = (i + CORNER_OFFSETS[(edge + 1) % 4][0], j + CORNER_OFFSETS[(edge + 1) % 4][1])
        fa, fb = a[0] * width + a[1], b[0] * width + b[1]
        key = min(fa, fb) * total + max(fa, fb)
        if key not in points:
            points[key] = _edge_point(values, axes, a, b, iso)
        return key

    for i, j in np.argwhere((case != 0) & (case != 15)):
        c = int(case[i, j])
        if c in SADDLE_TABLE:
            center = values[i:i + 2, j:j + 2].mean()
            pairs = SADDLE_TABLE[c][0 if center < iso else 1]
        else:
            pairs = SEGMENT_TABLE[c]
        for e0, e1 in pairs:
            k0, k1 = edge_key(i, j, e0), edge_key(i, j, e1)
            neighbours[k0].append(k1)
            neighbours[k1].append(k0)

    return _link(points, neighbours)


def _link(points: Dict[int, np.ndarray], neighbours: Dict[int, List[int]]) -> Contour:
    """Walk the segment graph (every key has degree 1 or 2) into polylines"""
    contour = Contour()
    visited = set()

    def walk(start: int) -> List[int]:
        chain = [start]
        visited.add(start)
        previous, current = None, start
        while True:
            step = [k for k in neighbours[current] if k != previous and k not in visited]
            if not step:
                return chain
            previous, current = current, step[0]
            visited.add(current)
            chain.append(current)

    # Open chains end on the domain boundary
    for key in sorted(neighbours):
        if key not in visited and len(neighbours[key]) == 1:
            chain = walk(key)
            contour.polylines.append(np.array([points[k] for k in chain]))
            contour.closed.append(False)
    for key in sorted(neighbours):
        if key not in visited:
            chain = walk(key)
            chain.append(chain[0])
            contour.polylines.append(np.array([points[k] for k in chain]))
            contour.closed.append(True)
    return contour
