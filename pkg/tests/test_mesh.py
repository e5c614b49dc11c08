import math

import numpy as np
import pytest

from surfflow.errors import MeshError
from surfflow.mesh import SurfaceMesh, gaussian_curvature_p1, generate_mesh, load_mesh, save_mesh


@pytest.mark.parametrize(
    "kind,params,chi,loops",
    [
        ("rectangle", dict(nx=3, ny=2), 1, 1),
        ("disk", dict(n_rings=3), 1, 1),
        ("annulus", dict(n_radial=2, n_angular=12), 0, 2),
        ("torus", dict(n_theta=8, n_phi=6), 0, 0),
        ("cylinder_lateral", dict(n_angular=12, n_axial=3), 0, 2),
        ("cylinder_with_hole", dict(h=0.08), -1, 3),
        ("channel_with_hole", dict(h=0.04), 0, 2),
    ],
)
def test_generator_topology(kind, params, chi, loops):
    m = generate_mesh(kind, **params)
    assert m.euler_characteristic == chi
    assert len(m.boundary_loops) == loops
    assert m.n_components == 1
    assert np.all(m.elem_area > 0)


def test_torus_genus_and_closed():
    m = generate_mesh("torus", n_theta=10, n_phi=6)
    assert m.is_closed and m.genus == 1


def test_rectangle_counts():
    m = generate_mesh("rectangle", nx=2, ny=2)
    assert (m.n_vertices, m.n_edges, m.n_triangles) == (9, 16, 8)
    assert math.isclose(m.total_area, 1.0)


def test_single_triangle():
    m = SurfaceMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
    assert m.n_edges == 3 and np.all(m.boundary_edge_mask)
    assert np.allclose(m.elem_normal[0], [0, 0, 1])
    assert math.isclose(m.elem_area[0], 0.5)


def test_degenerate_triangle_rejected():
    with pytest.raises(MeshError):
        SurfaceMesh([[0, 0, 0], [1, 0, 0], [2, 0, 0]], [[0, 1, 2]])


def test_nonmanifold_edge_rejected():
    v = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1]]
    with pytest.raises(MeshError):
        SurfaceMesh(v, [[0, 1, 2], [1, 0, 3], [0, 1, 4]])


def test_inconsistent_orientation_rejected():
    v = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]]
    with pytest.raises(MeshError):
        SurfaceMesh(v, [[0, 1, 2], [1, 2, 3]])


def test_boundary_loop_orientation_disk():
    m = generate_mesh("disk", n_rings=3)
    loop = m.boundary_loops[0]
    p = m.vertices[loop, :2]
    signed = 0.5 * np.sum(p[:, 0] * np.roll(p[:, 1], -1) - np.roll(p[:, 0], -1) * p[:, 1])
    assert signed > 0  # counterclockwise: surface on the left


def test_gauss_bonnet_closed():
    m = generate_mesh("torus", n_theta=12, n_phi=8)
    total = float(gaussian_curvature_p1(m) @ m.vertex_weights)
    assert abs(total) < 1e-10


def test_gauss_bonnet_boundary_free_plane():
    m = generate_mesh("disk", n_rings=3)
    k = gaussian_curvature_p1(m)
    assert np.abs(k[~m.boundary_vertex_mask]).max() < 1e-12


@pytest.mark.parametrize("suffix", [".off", ".obj"])
def test_mesh_roundtrip(tmp_path, suffix):
    m = generate_mesh("annulus", n_radial=2, n_angular=8)
    path = tmp_path / f"m{suffix}"
    save_mesh(m, path)
    m2 = load_mesh(path)
    assert np.array_equal(m.vertices, m2.vertices)
    assert np.array_equal(m.triangles, m2.triangles)


def test_load_reports_line_numbers(tmp_path):
    p = tmp_path / "bad.off"
    p.write_text("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n4 0 1 2 2\n")
    with pytest.raises(MeshError, match=":6:"):
        load_mesh(p)
    with pytest.raises(MeshError):
        load_mesh(tmp_path / "missing.off")


def test_channel_geometry():
    m = generate_mesh("channel_with_hole", h=0.03)
    assert m.vertices[:, 0].min() == pytest.approx(0.0) and m.vertices[:, 0].max() == pytest.approx(2.2)
    hole = m.boundary_loops[-1]
    r = np.linalg.norm(m.vertices[hole, :2] - [0.2, 0.2], axis=1)
    assert np.allclose(r, 0.05, atol=1e-12)
    assert m.total_area == pytest.approx(2.2 * 0.41 - np.pi * 0.05**2, rel=2e-3)


def test_cylinder_with_hole_on_surface():
    m = generate_mesh("cylinder_with_hole", h=0.05)
    r = np.hypot(m.vertices[:, 0], m.vertices[:, 1])
    assert np.allclose(r, 0.5, atol=1e-12)
    assert m.vertices[:, 2].min() == pytest.approx(-0.5) and m.vertices[:, 2].max() == pytest.approx(0.5)


def test_obstacle_ring_coarsening_keeps_cells_near_h():
    from surfflow.mesh.generate import _uniform_nodes, plate_with_hole

    xs = ys = _uniform_nodes(-0.3, 0.3, 0.01)
    fine = SurfaceMesh(*plate_with_hole(xs, ys, (0.0, 0.0), 0.05, 0.1, coarsen=False))
    coarse = SurfaceMesh(*plate_with_hole(xs, ys, (0.0, 0.0), 0.05, 0.1))
    assert coarse.euler_characteristic == fine.euler_characteristic == 0
    assert len(coarse.boundary_loops) == 2
    assert coarse.total_area == pytest.approx(fine.total_area, rel=1e-3)
    assert coarse.h_min > 1.8 * fine.h_min
    hole = coarse.boundary_loops[-1]
    assert len(hole) == 40
