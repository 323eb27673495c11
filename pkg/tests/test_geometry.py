import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp
from numpy import testing as npt

from metasdf.data.sdf_grid import SdfGrid, grid_from_function
from metasdf.errors import GeometryError, NonFiniteError
from metasdf.geometry.export import level_values, mesh_to_obj, save_contour_svg, save_trajectory_svg
from metasdf.geometry.grid_eval import extract_surface, grid_eval, surface_chamfer
from metasdf.geometry.marching_cubes import marching_cubes
from metasdf.geometry.marching_squares import marching_squares
from metasdf.geometry.surface import chamfer, sample_surface
from metasdf.utils import logging_utils

points = hnp.arrays(np.float64, st.tuples(st.integers(1, 20), st.just(2)),
                    elements=st.floats(-1.0, 1.0, allow_nan=False, allow_infinity=False))


def test_circle_contour_is_one_closed_loop(circle_grid):
    contour = marching_squares(circle_grid)
    assert len(contour) == 1
    assert contour.closed == [True]
    npt.assert_array_equal(contour.polylines[0][0], contour.polylines[0][-1])
    assert contour.lengths()[0] == pytest.approx(2 * np.pi * 0.5, rel=0.01)
    radii = np.linalg.norm(contour.points(), axis=1)
    assert np.max(np.abs(radii - 0.5)) < 0.01


def test_contour_cut_by_the_boundary_is_open():
    grid = grid_from_function(lambda p: np.linalg.norm(p - np.array([1.0, 0.0]), axis=1) - 0.5, (32, 32))
    contour = marching_squares(grid)
    assert contour.closed == [False]


def test_two_disks_give_two_loops():
    def two(p):
        return np.minimum(np.linalg.norm(p - [0.5, 0.0], axis=1), np.linalg.norm(p + [0.5, 0.0], axis=1)) - 0.25
    contour = marching_squares(grid_from_function(two, (48, 48)))
    assert len(contour) == 2
    assert all(contour.closed)


def test_no_crossing_gives_empty_geometry():
    assert marching_squares(SdfGrid(np.ones((8, 8)))).is_empty
    assert marching_cubes(SdfGrid(np.ones((6, 6, 6)))).is_empty


def test_wrong_dimension_is_rejected(circle_grid, sphere_grid):
    with pytest.raises(GeometryError):
        marching_cubes(circle_grid)
    with pytest.raises(GeometryError):
        marching_squares(sphere_grid)


def test_sphere_mesh_is_closed(sphere_grid):
    mesh = marching_cubes(sphere_grid)
    assert mesh.euler_characteristic() == 2
    assert mesh.areas().sum() == pytest.approx(4 * np.pi * 0.25, rel=0.1)
    radii = np.linalg.norm(mesh.vertices, axis=1)
    assert np.max(np.abs(radii - 0.5)) < sphere_grid.cell_width


def box_sdf(p, half=0.4):
    q = np.abs(p) - half
    return np.linalg.norm(np.maximum(q, 0.0), axis=1) + np.minimum(q.max(axis=1), 0.0)


def torus_sdf(p, major=0.5, minor=0.2):
    ring = np.linalg.norm(p[:, :2], axis=1) - major
    return np.hypot(ring, p[:, 2]) - minor


def edge_use_counts(mesh):
    pairs = np.sort(mesh.triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
    _, counts = np.unique(pairs, axis=0, return_counts=True)
    return counts


@pytest.mark.parametrize("sdf, resolution, euler", [
    (lambda p: np.linalg.norm(p - [0.13, -0.21, 0.07], axis=1) - 0.45, 19, 2),
    (box_sdf, 20, 2),
    (torus_sdf, 32, 0),
])
def test_meshes_are_watertight(sdf, resolution, euler):
    grid = grid_from_function(sdf, (resolution,) * 3)
    mesh = marching_cubes(grid)
    assert mesh.euler_characteristic() == euler
    assert np.all(edge_use_counts(mesh) == 2)
    assert np.max(np.abs(grid.sample(mesh.vertices))) < grid.cell_width


def test_sphere_normals_point_outwards(sphere_grid):
    mesh = marching_cubes(sphere_grid)
    centers = mesh.corners().mean(axis=1)
    outward = (mesh.face_normals() * centers).sum(axis=1) > 0
    assert outward.mean() > 0.99


def test_obj_text(sphere_grid):
    mesh = marching_cubes(sphere_grid)
    text = mesh_to_obj(mesh)
    lines = text.splitlines()
    assert sum(line.startswith("v ") for line in lines) == len(mesh.vertices)
    assert sum(line.startswith("f ") for line in lines) == len(mesh.triangles)


def test_surface_samples_lie_on_the_circle(circle_grid):
    samples = sample_surface(marching_squares(circle_grid), 500, seed=0)
    assert samples.shape == (500, 2)
    assert np.max(np.abs(np.linalg.norm(samples, axis=1) - 0.5)) < 0.01
    npt.assert_array_equal(samples, sample_surface(marching_squares(circle_grid), 500, seed=0))


def test_sample_surface_edge_cases(circle_grid):
    assert sample_surface(marching_squares(circle_grid), 0).shape == (0, 2)
    with pytest.raises(GeometryError):
        sample_surface(marching_squares(SdfGrid(np.ones((8, 8)))), 5)


@settings(max_examples=40, deadline=None)
@given(points, points)
def test_chamfer_is_symmetric_and_tree_matches_brute_force(a, b):
    assert chamfer(a, b) == chamfer(b, a)
    assert chamfer(a, b) == pytest.approx(chamfer(a, b, accelerate=False), abs=1e-12)
    assert chamfer(a, a) == 0.0


def test_chamfer_of_shifted_points():
    a = np.zeros((1, 2))
    b = np.array([[0.3, 0.4]])
    assert chamfer(a, b) == pytest.approx(2 * 0.25)
    with pytest.raises(GeometryError):
        chamfer(a, np.zeros((0, 2)))


def test_grid_eval_reproduces_an_analytic_function():
    grid = grid_eval(lambda p: np.linalg.norm(p, axis=1) - 0.5, 16, dim=2)
    npt.assert_allclose(grid.values, grid_from_function(lambda p: np.linalg.norm(p, axis=1) - 0.5, (16, 16)).values)


def test_grid_eval_rejects_non_finite_predictions():
    with pytest.raises(NonFiniteError):
        grid_eval(lambda p: np.full(len(p), np.nan), 8, dim=2)


def test_surface_chamfer_of_identical_grids(circle_grid):
    assert surface_chamfer(circle_grid, circle_grid, n=2000, seed=0) < 1e-3


def test_surface_chamfer_without_surface(circle_grid):
    assert np.isnan(surface_chamfer(SdfGrid(np.ones((32, 32))), circle_grid))
    assert any("Chamfer" in p for p in logging_utils.problem_cases)


def test_extract_surface_dispatches(circle_grid, sphere_grid):
    assert extract_surface(circle_grid).polylines
    assert len(extract_surface(sphere_grid).triangles) > 0


def test_level_values_skip_zero(circle_grid):
    levels = level_values(circle_grid, spacing=0.1)
    assert 0.0 not in levels
    assert min(levels) >= circle_grid.values.min()
    assert max(levels) <= circle_grid.values.max()


def test_svg_figures_are_reproducible(tmp_path, circle_grid):
    first, second = tmp_path / "a.svg", tmp_path / "b.svg"
    save_contour_svg(circle_grid, str(first), title="circle")
    save_contour_svg(circle_grid, str(second), title="circle")
    assert first.read_bytes() == second.read_bytes()
    save_trajectory_svg([circle_grid, circle_grid], str(tmp_path / "traj.svg"))
    assert (tmp_path / "traj.svg").read_bytes().startswith(b"<?xml")
