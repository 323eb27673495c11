"""
Analytic 3D shapes (primitives and CSG trees) as ground-truth SDFs
"""
from dataclasses import dataclass, field
from typing import Any, Dict, List, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

from metasdf.data.sdf_grid import lattice_coords
from metasdf.errors import SdfDataError

PRIMITIVES = ("sphere", "box", "torus")
OPERATORS = ("union", "intersection", "difference")
MAX_DEPTH = 3


@dataclass
class ShapeSpec3D:
    """
    One node of a shape tree

    Primitives carry sizes (sphere: (r,), box: half extents (bx, by, bz),
    torus: (major, minor)); operator nodes carry children. Every node has an
    optional rigid transform given as xyz euler angles (degrees) and a translation.
    """
    kind: str
    size: Tuple[float, ...] = ()
    rotation: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    translation: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    children: List["ShapeSpec3D"] = field(default_factory=list)

    def __post_init__(self):
        self.size = tuple(float(s) for s in self.size)
        self.rotation = tuple(float(a) for a in self.rotation)
        self.translation = tuple(float(t) for t in self.translation)
        self.validate()

    def validate(self) -> None:
        expected = {"sphere": 1, "box": 3, "torus": 2}
        if self.kind in PRIMITIVES:
            if len(self.size) != expected[self.kind] or min(self.size) <= 0:
                raise SdfDataError(f"{self.kind} needs {expected[self.kind]} positive size values, got {self.size}")
            if self.children:
                raise SdfDataError(f"{self.kind} cannot have children")
        elif self.kind in OPERATORS:
            if len(self.children) < 2 or (self.kind == "difference" and len(self.children) != 2):
                raise SdfDataError(f"{self.kind} node has {len(self.children)} children")
        else:
            raise SdfDataError(f"Unknown shape kind '{self.kind}'")
        if self.depth() > MAX_DEPTH:
            raise SdfDataError(f"Shape tree depth {self.depth()} exceeds {MAX_DEPTH}")

    def depth(self) -> int:
        if not self.children:
            return 0
        return 1 + max(child.depth() for child in self.children)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "size": list(self.size),
            "rotation": list(self.rotation),
            "translation": list(self.translation),
            "children": [child.to_dict() for child in self.children],
        }

    @classmethod
    def from_dict(cls, values: Dict[str, Any]) -> "ShapeSpec3D":
        return cls(
            kind=values["kind"],
            size=tuple(values.get("size", ())),
            rotation=tuple(values.get("rotation", (0.0, 0.0, 0.0))),
            translation=tuple(values.get("translation", (0.0, 0.0, 0.0))),
            children=[cls.from_dict(c) for c in values.get("children", [])],
        )


def _to_local(spec: ShapeSpec3D, points: np.ndarray) -> np.ndarray:
    local = points - np.asarray(spec.translation)
    if any(spec.rotation):
        # Rows are points, so p @ R applies R^T (the inverse rotation)
        matrix = Rotation.from_euler("xyz", spec.rotation, degrees=True).as_matrix()
        local = local @ matrix
    return local


def _primitive(kind: str, size: Tuple[float, ...], p: np.ndarray) -> np.ndarray:
    if kind == "sphere":
        return np.linalg.norm(p, axis=1) - size[0]
    if kind == "box":
        q = np.abs(p) - np.asarray(size)
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
        inside = np.minimum(q.max(axis=1), 0.0)
        return outside + inside
    major, minor = size
    ring = np.linalg.norm(p[:, :2], axis=1) - major
    return np.sqrt(ring ** 2 + p[:, 2] ** 2) - minor


def analytic_sdf(spec: ShapeSpec3D, coords: np.ndarray) -> np.ndarray:
    """
    Evaluate a shape tree at points

    Primitives are exact. Union (min), intersection (max) and difference
    (max(a, -b)) give a lower bound of the true distance that is exact where
    the nearest surface point belongs to a single primitive.

    Args:
        spec: Shape tree
        coords: (n, 3) points

    Returns:
        (n,) signed distances
    """
    coords = np.asarray(coords, dtype=np.float64).reshape(-1, 3)
    p = _to_local(spec, coords)
    if spec.kind in PRIMITIVES:
        return _primitive(spec.kind, spec.size, p)
    parts = [analytic_sdf(child, p) for child in spec.children]
    if spec.kind == "union":
        return np.min(parts, axis=0)
    if spec.kind == "intersection":
        return np.max(parts, axis=0)
    return np.maximum(parts[0], -parts[1])


def random_primitive(rng: np.random.Generator, scale: float = 1.0) -> ShapeSpec3D:
    kind = PRIMITIVES[rng.integers(len(PRIMITIVES))]
    if kind == "sphere":
        size = (rng.uniform(0.25, 0.55) * scale,)
    elif kind == "box":
        size = tuple(rng.uniform(0.15, 0.45, size=3) * scale)
    else:
        major = rng.uniform(0.3, 0.5) * scale
        size = (major, rng.uniform(0.08, 0.2) * scale)
    return ShapeSpec3D(kind, size=size, rotation=tuple(rng.uniform(-45.0, 45.0, size=3)),
                       translation=tuple(rng.uniform(-0.1, 0.1, size=3)))


def random_shape3d(rng: np.random.Generator, max_children: int = 2) -> Tuple[ShapeSpec3D, int]:
    """
    Random primitive or small CSG combination

    Returns:
        (spec, class label) where the label is the index of the root kind in
        PRIMITIVES + OPERATORS
    """
    if max_children < 2 or rng.uniform() < 0.5:
        spec = random_primitive(rng)
    else:
        op = OPERATORS[rng.integers(len(OPERATORS))]
        count = 2 if op == "difference" else int(rng.integers(2, max_children + 1))
        children = [random_primitive(rng, scale=0.8) for _ in range(count)]
        for child in children:
            child.translation = tuple(float(t) for t in rng.uniform(-0.25, 0.25, size=3))
        if op == "difference":
            children[1] = ShapeSpec3D(children[1].kind, size=tuple(s * 0.7 for s in children[1].size),
                                      rotation=children[1].rotation, translation=children[1].translation)
        spec = ShapeSpec3D(op, children=children)
    return spec, (PRIMITIVES + OPERATORS).index(spec.kind)


def shape_has_surface(spec: ShapeSpec3D, resolution: int = 16) -> bool:
    """Whether the shape's zero level set crosses a coarse lattice of the domain"""
    values = analytic_sdf(spec, lattice_coords((resolution,) * 3))
    return bool(values.min() < 0.0 < values.max())
