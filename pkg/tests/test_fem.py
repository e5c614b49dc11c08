import numpy as np
import pytest

from oracle import DenseDisc
from surfflow import fem
from surfflow.mesh import generate_mesh


@pytest.fixture(params=["disk", "annulus", "torus", "cylinder"])
def mesh(request, small_meshes):
    return small_meshes[request.param]


def test_gradients_match_metric_formula(tiny_meshes):
    for m in tiny_meshes.values():
        d = DenseDisc(m.vertices, m.triangles)
        assert np.allclose(fem.operators(m).grad_p1.toarray(), d.Gp1, atol=1e-12)
        perm = np.array([d.edge_id[tuple(e)] for e in m.edges])
        assert np.allclose(fem.operators(m).grad_cr.toarray(), d.Gcr[:, perm], atol=1e-12)
        assert np.allclose(fem.operators(m).mass_p1.toarray(), d.Mp1, atol=1e-14)


def test_linear_function_gradient():
    m = generate_mesh("rectangle", nx=3, ny=3)
    g = fem.grad_h_p1(m, 2 * m.vertices[:, 0] - m.vertices[:, 1])
    assert np.allclose(g, [2, -1, 0])
    gc = fem.grad_h_cr(m, fem.p1_to_cr(m, 2 * m.vertices[:, 0] - m.vertices[:, 1]))
    assert np.allclose(gc, [2, -1, 0])


def test_rot_is_rotated_gradient(mesh, rng):
    f = rng.standard_normal(mesh.n_vertices)
    g = fem.grad_h_p1(mesh, f)
    r = fem.rot_h(mesh, f, "p1")
    assert np.allclose(np.einsum("ti,ti->t", g, r), 0, atol=1e-12)
    assert np.allclose(np.linalg.norm(g, axis=1), np.linalg.norm(r, axis=1))
    assert np.allclose(np.einsum("ti,ti->t", r, mesh.elem_normal), 0, atol=1e-12)


def test_j_squares_to_minus_identity(mesh, rng):
    X = fem.tangential_projection(mesh, rng.standard_normal((mesh.n_triangles, 3)))
    assert np.allclose(fem.j_h(mesh, fem.j_h(mesh, X)), -X, atol=1e-13)


def test_grad_cr_orthogonal_to_rot_p1(mesh, rng):
    q = rng.standard_normal(mesh.n_edges)
    psi = rng.standard_normal(mesh.n_vertices)
    if not mesh.is_closed:
        psi[mesh.boundary_vertex_mask] = 0
    a = fem.grad_h_cr(mesh, q)
    b = fem.rot_h(mesh, psi, "p1")
    scale = np.sqrt(fem.inner_vec(mesh, a, a) * fem.inner_vec(mesh, b, b))
    assert abs(fem.inner_vec(mesh, a, b)) <= 1e-12 * scale


def test_rotrot_equals_stiffness(mesh):
    ops = fem.operators(mesh)
    assert abs(ops.rotrot_p1 - ops.stiffness_p1).max() < 1e-12


def test_mass_total_area(mesh):
    M = fem.mass_p1(mesh)
    one = np.ones(mesh.n_vertices)
    assert one @ (M @ one) == pytest.approx(mesh.total_area, rel=1e-13)
    assert fem.mass_p1(mesh, lumped=True).diagonal().sum() == pytest.approx(mesh.total_area, rel=1e-13)


def test_weighted_form_exact(mesh, rng):
    w = rng.standard_normal(mesh.n_vertices)
    X = rng.standard_normal((mesh.n_triangles, 3))
    Y = rng.standard_normal((mesh.n_triangles, 3))
    d = DenseDisc(mesh.vertices, mesh.triangles)
    ref = 0.0
    for t, tri in enumerate(mesh.triangles):
        ref += d.area[t] * w[tri].mean() * X[t] @ Y[t]
    assert fem.weighted_vec_form(mesh, w, X, Y) == pytest.approx(ref, rel=1e-12)


def test_constrained_solver_dirichlet():
    m = generate_mesh("rectangle", nx=5, ny=5)
    ops = fem.operators(m)
    exact = m.vertices[:, 0] + 2 * m.vertices[:, 1]  # harmonic
    s = fem.ConstrainedSolver(ops.stiffness_p1, m.boundary_vertex_mask, tol=1e-13)
    x = s.solve(np.zeros(m.n_vertices), fixed_values=exact)
    assert np.abs(x - exact).max() < 1e-10


def test_constrained_solver_conserves_constant():
    m = generate_mesh("torus", n_theta=12, n_phi=8)
    M = fem.mass_p1(m)
    s = fem.ConstrainedSolver(M, np.zeros(m.n_vertices, bool), tol=1e-6, conserve_constant=True)
    b = np.random.default_rng(0).standard_normal(m.n_vertices)
    x = s.solve(b)
    assert abs((M @ x).sum() - b.sum()) < 1e-12 * np.abs(b).sum()


def test_cr_to_p1_constant():
    m = generate_mesh("disk", n_rings=3)
    assert np.allclose(fem.cr_to_p1(m, np.full(m.n_edges, 2.5)), 2.5)
