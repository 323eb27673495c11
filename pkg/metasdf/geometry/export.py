"""
Geometry export: OBJ meshes, JSON polylines and SVG contour figures
"""
import io
import json
from typing import List, Optional, Sequence

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from metasdf import config  # noqa: E402
from metasdf.data.sdf_grid import SdfGrid, cell_centers  # noqa: E402
from metasdf.geometry.marching_cubes import Mesh  # noqa: E402
from metasdf.geometry.marching_squares import Contour  # noqa: E402
from metasdf.utils.file_utils import atomic_write_bytes, atomic_write_text  # noqa: E402

# Stable element ids so identical figures give identical files
plt.rcParams["svg.hashsalt"] = "metasdf"


def mesh_to_obj(mesh: Mesh) -> str:
    lines = [f"# vertices {len(mesh.vertices)} faces {len(mesh.triangles)}"]
    lines.extend(f"v {x:.9g} {y:.9g} {z:.9g}" for x, y, z in mesh.vertices)
    lines.extend(f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles)
    return "\n".join(lines) + "\n"


def save_obj(mesh: Mesh, path: str) -> None:
    """Write an ASCII OBJ file"""
    atomic_write_text(path, mesh_to_obj(mesh))


def save_contour_json(contour: Contour, path: str) -> None:
    atomic_write_text(path, json.dumps(contour.to_dict(), sort_keys=True) + "\n")


def level_values(grid: SdfGrid, spacing: float = config.LEVEL_SPACING) -> List[float]:
    """Non-zero levels at multiples of spacing within the grid's value range"""
    low = np.ceil(grid.values.min() / spacing)
    high = np.floor(grid.values.max() / spacing)
    return [float(k * spacing) for k in np.arange(low, high + 1) if k != 0]


def _draw(ax, grid: SdfGrid, title: str, extra_levels: bool) -> None:
    ys = cell_centers(grid.resolution[0])
    xs = cell_centers(grid.resolution[1])
    # Array axis 0 is the first coordinate; draw it vertically, flipped so +y is up
    if extra_levels:
        levels = level_values(grid)
        if levels:
            ax.contour(xs, ys, grid.values, levels=levels, colors="0.6", linewidths=0.4)
    if grid.values.min() < 0.0 < grid.values.max():
        ax.contour(xs, ys, grid.values, levels=[0.0], colors="black", linewidths=2.0)
    ax.set_xlim(-1, 1)
    ax.set_ylim(1, -1)
    ax.set_aspect("equal")
    ax.set_xticks([])
    ax.set_yticks([])
    if title:
        ax.set_title(title, fontsize=8)


def _save_figure(fig, path: str) -> None:
    buffer = io.BytesIO()
    fig.savefig(buffer, format="svg", metadata={"Date": None})
    plt.close(fig)
    atomic_write_bytes(path, buffer.getvalue())


def save_contour_svg(grid: SdfGrid, path: str, title: str = "", extra_levels: bool = True) -> None:
    """
    Draw the zero level in bold, plus thin level sets every LEVEL_SPACING

    Args:
        grid: 2-D grid
        path: Output SVG path
        title: Optional title
        extra_levels: Draw the non-zero level sets
    """
    fig, ax = plt.subplots(figsize=(3, 3))
    _draw(ax, grid, title, extra_levels)
    _save_figure(fig, path)


def save_trajectory_svg(grids: Sequence[SdfGrid], path: str, titles: Optional[Sequence[str]] = None) -> None:
    """One panel per inner step, left to right"""
    titles = list(titles) if titles is not None else [f"step {j}" for j in range(len(grids))]
    fig, axes = plt.subplots(1, len(grids), figsize=(2.2 * len(grids), 2.4), squeeze=False)
    for ax, grid, title in zip(axes[0], grids, titles):
        _draw(ax, grid, title, extra_levels=True)
    _save_figure(fig, path)
