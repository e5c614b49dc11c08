import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from surfflow.errors import SolverError
from surfflow.linalg import assemble, cg_solve, is_symmetric, solve_checked, solve_singular_zero_mean
from surfflow.mesh import SurfaceMesh, generate_mesh
from surfflow import fem


def test_assemble_sums_duplicates():
    A = assemble([(0, 0, 1.0), (0, 0, 2.0)], None, None, (1, 1))
    assert A.toarray().tolist() == [[3.0]]


def test_assemble_empty():
    A = assemble([], None, None, (2, 2))
    assert A.shape == (2, 2) and A.nnz == 0


def test_assemble_sorted_csr():
    A = assemble([2, 0, 2, 1], [1, 2, 0, 1], [1.0, 2.0, 3.0, 4.0], (3, 3))
    assert A.has_sorted_indices
    for i in range(3):
        cols = A.indices[A.indptr[i] : A.indptr[i + 1]]
        assert np.all(np.diff(cols) > 0)


def test_assemble_out_of_range():
    with pytest.raises(IndexError):
        assemble([(0, 3, 1.0)], None, None, (2, 2))


def test_reference_triangle_stiffness_rows_sum_to_zero():
    m = SurfaceMesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])
    K = fem.stiffness_p1(m).toarray()
    assert np.allclose(K.sum(axis=1), 0, atol=1e-15)
    assert is_symmetric(fem.stiffness_p1(m))


def test_cg_identity():
    x, rep = cg_solve(sp.identity(3, format="csr"), np.array([1.0, 2.0, 3.0]))
    assert np.allclose(x, [1, 2, 3]) and rep.iterations <= 1 and rep.converged


def test_cg_two_by_two():
    A = sp.csr_matrix([[4.0, 1.0], [1.0, 3.0]])
    x, rep = cg_solve(A, np.array([1.0, 2.0]), tol=1e-14)
    assert np.allclose(x, [1 / 11, 7 / 11], atol=1e-14)


def test_cg_dirichlet_laplacian_matches_dense():
    m = generate_mesh("rectangle", nx=2, ny=2)
    K = fem.stiffness_p1(m)
    free = ~m.boundary_vertex_mask
    b = fem.operators(m).mass_p1 @ np.ones(m.n_vertices)
    A = K[free][:, free]
    x, rep = cg_solve(A, b[free], tol=1e-13)
    ref = np.linalg.solve(A.toarray(), b[free])
    assert np.allclose(x, ref, rtol=0, atol=1e-10 * np.abs(ref).max())


def test_cg_max_iter_returns_best_iterate():
    m = generate_mesh("rectangle", nx=8, ny=8)
    free = ~m.boundary_vertex_mask
    A = fem.stiffness_p1(m)[free][:, free]
    x, rep = cg_solve(A, np.ones(A.shape[0]), max_iter=2)
    assert not rep.converged and rep.iterations == 2
    with pytest.raises(SolverError):
        solve_checked(A, np.ones(A.shape[0]), max_iter=2)


def test_cg_nan_breakdown():
    A = sp.csr_matrix(np.array([[1.0, 0.0], [0.0, np.nan]]))
    with pytest.raises(SolverError):
        cg_solve(A, np.ones(2), precond="none")


@settings(max_examples=25, deadline=None)
@given(n=st.integers(2, 60), seed=st.integers(0, 2**31 - 1))
def test_cg_matches_dense_random_spd(n, seed):
    rng = np.random.default_rng(seed)
    B = rng.standard_normal((n, n))
    A = B @ B.T + n * np.eye(n)
    b = rng.standard_normal(n)
    ref = np.linalg.solve(A, b)
    for pc in ("jacobi", "none"):
        x, rep = cg_solve(sp.csr_matrix(A), b, tol=1e-12, precond=pc)
        assert rep.converged
        assert np.linalg.norm(x - ref) <= 1e-8 * np.linalg.norm(ref)


def test_singular_zero_mean():
    m = generate_mesh("rectangle", nx=6, ny=6)
    K = fem.stiffness_cr(m)
    w = m.edge_weights
    assert np.allclose(solve_singular_zero_mean(K, np.zeros(m.n_edges), w)[0], 0)
    q = m.edge_midpoints[:, 0]
    q = q - (w @ q) / w.sum()
    b = fem.operators(m).load_grad_cr(fem.grad_h_cr(m, q))
    x, rep = solve_singular_zero_mean(K, b, w, tol=1e-13)
    assert np.abs(x - q).max() < 1e-8
    # load with a constant component is projected; solution stays zero mean
    x2, _ = solve_singular_zero_mean(K, b + 0.3 * w, w, tol=1e-13)
    assert abs(w @ x2) <= 1e-10 * np.linalg.norm(x2)
    assert np.abs(x2 - q).max() < 1e-8


def test_lu_preconditioner_solves_in_few_iterations(rng):
    from surfflow import fem
    from surfflow.mesh import generate_mesh

    m = generate_mesh("disk", n_rings=8)
    K = fem.operators(m).rotrot_p1
    fixed = m.boundary_vertex_mask
    b = rng.standard_normal(m.n_vertices)
    ref = fem.ConstrainedSolver(K, fixed, tol=1e-12).solve(b)
    s = fem.ConstrainedSolver(K, fixed, tol=1e-12, precond="lu")
    x = s.solve(b)
    assert s.last_report.iterations <= 2
    assert np.abs(x - ref).max() < 1e-9 * np.abs(ref).max()


def test_lu_preconditioner_zero_mean(rng):
    from surfflow import fem
    from surfflow.mesh import generate_mesh

    m = generate_mesh("torus", n_theta=16, n_phi=8)
    K = fem.operators(m).rotrot_p1
    none = np.zeros(m.n_vertices, dtype=bool)
    b = rng.standard_normal(m.n_vertices)
    ref = fem.ConstrainedSolver(K, none, weights=m.vertex_weights, tol=1e-12).solve(b)
    s = fem.ConstrainedSolver(K, none, weights=m.vertex_weights, tol=1e-12, precond="lu")
    x = s.solve(b)
    assert s.last_report.iterations <= 5
    assert np.abs(x - ref).max() < 1e-9 * np.abs(ref).max()
