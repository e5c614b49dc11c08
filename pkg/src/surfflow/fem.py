"""Low-order surface finite elements.

Three discrete spaces live on a :class:`~surfflow.mesh.SurfaceMesh`:

* P0 tangential vector fields, stored as ``(n_triangles, 3)`` ambient vectors;
* continuous P1 Lagrange scalars, one value per vertex;
* Crouzeix-Raviart scalars, one value per edge midpoint.

The CR basis function of the edge opposite local vertex ``k`` is
``1 - 2*lambda_k`` on each adjacent triangle. All operators into P0 are
assembled once per mesh as sparse matrices acting on the row-major flattened
field (``3*t + i``) and cached on the mesh.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import linalg
from .linalg import DEFAULT_TOL, assemble


class Operators:
    """Assembled operators of one mesh. Use :func:`operators` to obtain."""

    def __init__(self, mesh):
        self.mesh = mesh
        nt, nv, ne = mesh.n_triangles, mesh.n_vertices, mesh.n_edges
        tri, g = mesh.triangles, mesh.hat_gradients
        rows = (3 * np.arange(nt)[:, None, None] + np.arange(3)[None, None, :]).repeat(3, axis=1)
        # rows[t, k, i] = 3t + i ; g[t, k, i] = d/dx_i of hat k
        self.grad_p1 = assemble(rows, np.broadcast_to(tri[:, :, None], rows.shape), g, (3 * nt, nv))
        self.grad_cr = assemble(rows, np.broadcast_to(mesh.tri_edges[:, :, None], rows.shape), -2.0 * g, (3 * nt, ne))
        n = mesh.elem_normal
        z = np.zeros(nt)
        blocks = np.stack(
            [
                np.stack([z, -n[:, 2], n[:, 1]], axis=1),
                np.stack([n[:, 2], z, -n[:, 0]], axis=1),
                np.stack([-n[:, 1], n[:, 0], z], axis=1),
            ],
            axis=1,
        )
        self.J = _block_diag3(blocks)
        self.rot_p1 = (-self.J @ self.grad_p1).tocsr()
        self.rot_cr = (-self.J @ self.grad_cr).tocsr()
        self.mass_x = np.repeat(mesh.elem_area, 3)
        Mx = sp.diags(self.mass_x)
        self.stiffness_p1 = _sym((self.grad_p1.T @ Mx @ self.grad_p1).tocsr())
        self.stiffness_cr = _sym((self.grad_cr.T @ Mx @ self.grad_cr).tocsr())
        self.rotrot_p1 = _sym((self.rot_p1.T @ Mx @ self.rot_p1).tocsr())
        self.mass_p1 = _p1_mass(mesh)
        self.avg_p1 = assemble(np.repeat(np.arange(nt), 3), tri.ravel(), 1.0 / 3.0, (nt, nv))
        self._load_rot = (self.rot_p1.T @ Mx).tocsr()
        self._load_grad_cr = (self.grad_cr.T @ Mx).tocsr()

    # loads: functionals X -> (X, D phi_j) for every basis function phi_j
    def load_rot_p1(self, X):
        return self._load_rot @ np.asarray(X).reshape(-1)

    def load_grad_cr(self, X):
        return self._load_grad_cr @ np.asarray(X).reshape(-1)

    def load_p0_scalar(self, a):
        """``(a, phi_j)`` for a piecewise constant scalar ``a`` and P1 hats."""
        return self.avg_p1.T @ (np.asarray(a) * self.mesh.elem_area)

    def inner(self, X, Y):
        return float(np.dot(self.mass_x, (np.asarray(X) * np.asarray(Y)).reshape(-1)))


def _block_diag3(blocks):
    nt = len(blocks)
    r = 3 * np.arange(nt)[:, None, None] + np.arange(3)[None, :, None]
    c = 3 * np.arange(nt)[:, None, None] + np.arange(3)[None, None, :]
    return assemble(np.broadcast_to(r, blocks.shape), np.broadcast_to(c, blocks.shape), blocks, (3 * nt, 3 * nt))


def _sym(A):
    A = 0.5 * (A + A.T)
    A = A.tocsr()
    A.sort_indices()
    return A


def _p1_mass(mesh):
    local = (np.ones((3, 3)) + np.eye(3)) / 12.0
    tri = mesh.triangles
    r = np.repeat(tri[:, :, None], 3, axis=2)
    c = np.repeat(tri[:, None, :], 3, axis=1)
    v = mesh.elem_area[:, None, None] * local[None]
    return _sym(assemble(r, c, v, (mesh.n_vertices, mesh.n_vertices)))


def operators(mesh):
    """Cached :class:`Operators` for ``mesh``."""
    ops = mesh.__dict__.get("_fem_operators")
    if ops is None:
        ops = Operators(mesh)
        mesh.__dict__["_fem_operators"] = ops
    return ops


# ---------------------------------------------------------------------------
# field-level operations
# ---------------------------------------------------------------------------
def _as_p0(ops, flat):
    return np.asarray(flat).reshape(ops.mesh.n_triangles, 3)


def grad_h_p1(mesh, f):
    ops = operators(mesh)
    return _as_p0(ops, ops.grad_p1 @ np.asarray(f, dtype=float))


def grad_h_cr(mesh, q):
    ops = operators(mesh)
    return _as_p0(ops, ops.grad_cr @ np.asarray(q, dtype=float))


def j_h(mesh, X):
    """Element-wise rotation by 90 degrees in the tangent plane, ``N x X``."""
    return np.cross(mesh.elem_normal, np.asarray(X, dtype=float).reshape(-1, 3))


def rot_h(mesh, f, space=None):
    """``-J grad f`` for a P1 (vertex) or CR (edge) field.

    ``space`` is inferred from the length of ``f`` unless given explicitly.
    """
    f = np.asarray(f, dtype=float)
    if space is None:
        if mesh.n_vertices == mesh.n_edges:
            raise ValueError("ambiguous field length; pass space='p1' or 'cr'")
        space = "p1" if len(f) == mesh.n_vertices else "cr"
    grad = grad_h_p1(mesh, f) if space == "p1" else grad_h_cr(mesh, f)
    return -j_h(mesh, grad)


def inner_vec(mesh, X, Y):
    """L2 inner product of two P0 vector fields."""
    return float(np.einsum("t,ti,ti->", mesh.elem_area, np.reshape(X, (-1, 3)), np.reshape(Y, (-1, 3))))


def weighted_vec_form(mesh, w, X, Y):
    """Exact ``integral of w <X, Y>`` for P1 ``w`` and P0 ``X``, ``Y``."""
    wbar = np.asarray(w, dtype=float)[mesh.triangles].mean(axis=1)
    return float(np.einsum("t,ti,ti->", mesh.elem_area * wbar, np.reshape(X, (-1, 3)), np.reshape(Y, (-1, 3))))


def advection_p0(mesh, V, w):
    """Per-element ``<V, grad_h w>``."""
    return np.einsum("ti,ti->t", np.reshape(V, (-1, 3)), grad_h_p1(mesh, w))


def mass_p1(mesh, lumped=False):
    ops = operators(mesh)
    if lumped:
        return sp.diags(mesh.vertex_weights).tocsr()
    return ops.mass_p1


def stiffness_p1(mesh):
    return operators(mesh).stiffness_p1


def stiffness_cr(mesh):
    return operators(mesh).stiffness_cr


def rotrot_s10(mesh, fixed=None):
    """``(rot phi_i, rot phi_j)`` restricted to the free streamfunction dofs."""
    A = operators(mesh).rotrot_p1
    if fixed is None:
        fixed = mesh.boundary_vertex_mask
    free = np.flatnonzero(~np.asarray(fixed))
    return A[free][:, free].tocsr()


def p1_to_cr(mesh, f):
    """Interpolate a P1 field into CR midpoint values."""
    f = np.asarray(f, dtype=float)
    return 0.5 * (f[mesh.edges[:, 0]] + f[mesh.edges[:, 1]])


def cr_to_p1(mesh, q):
    """Area-weighted vertex average of a CR field (for display)."""
    q = np.asarray(q, dtype=float)
    tri_val = q[mesh.tri_edges].mean(axis=1) * mesh.elem_area
    num = np.zeros(mesh.n_vertices)
    den = np.zeros(mesh.n_vertices)
    np.add.at(num, mesh.triangles, np.repeat(tri_val[:, None], 3, axis=1))
    np.add.at(den, mesh.triangles, np.repeat(mesh.elem_area[:, None], 3, axis=1))
    return num / den


def tangential_projection(mesh, X):
    """Remove the normal component of ambient per-element vectors."""
    X = np.asarray(X, dtype=float).reshape(-1, 3)
    n = mesh.elem_normal
    return X - np.einsum("ti,ti->t", X, n)[:, None] * n


# ---------------------------------------------------------------------------
# constrained spaces
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class DofSpaces:
    """Dof masks of the (possibly patched) scalar spaces.

    ``psi_fixed`` marks streamfunction vertices held at zero, ``q_fixed`` CR
    potential edges held at zero (or at Dirichlet data), ``omega_fixed``
    vorticity vertices carrying Dirichlet data. An empty mask on the
    streamfunction or potential space switches to the zero-mean constraint.
    """

    psi_fixed: np.ndarray
    q_fixed: np.ndarray
    omega_fixed: np.ndarray

    @classmethod
    def homogeneous(cls, mesh):
        return cls(
            psi_fixed=np.array(mesh.boundary_vertex_mask),
            q_fixed=np.zeros(mesh.n_edges, dtype=bool),
            omega_fixed=np.zeros(mesh.n_vertices, dtype=bool),
        )

    @property
    def psi_zero_mean(self):
        return not self.psi_fixed.any()

    @property
    def q_zero_mean(self):
        return not self.q_fixed.any()

    def dim_psi(self):
        return int((~self.psi_fixed).sum()) - int(self.psi_zero_mean)

    def dim_q(self):
        return int((~self.q_fixed).sum()) - int(self.q_zero_mean)


class ConstrainedSolver:
    """CG solver for ``K x = b`` with Dirichlet dofs or a zero-mean constraint.

    Parameters
    ----------
    K : sparse matrix
        Full symmetric matrix over all dofs.
    fixed : bool ndarray
        Dirichlet dofs. When none are fixed and ``weights`` is given, ``K`` is
        treated as singular with constant kernel and the solution is returned
        with zero weighted mean.
    weights : ndarray, optional
        Mass weights for the zero-mean constraint.
    precond : {"jacobi", "lu", "none"}
        ``"lu"`` factors the matrix once and reuses it as a preconditioner,
        so every later solve takes one or two CG iterations.
    conserve_constant : bool
        For nonsingular full-dof systems, add a one-dimensional Galerkin
        correction along the constant vector after CG so that
        ``1^T K x = 1^T b`` holds to rounding.
    """

    def __init__(self, K, fixed, weights=None, tol=DEFAULT_TOL, precond="jacobi", conserve_constant=False):
        fixed = np.asarray(fixed, dtype=bool)
        self.n = K.shape[0]
        self.fixed = fixed
        self.free = np.flatnonzero(~fixed)
        self.fixed_idx = np.flatnonzero(fixed)
        self.tol = tol
        self.precond = precond
        self.zero_mean = not fixed.any() and weights is not None
        self.weights = None if weights is None else np.asarray(weights, dtype=float)
        if fixed.any():
            Kf = K[self.free]
            self.A = Kf[:, self.free].tocsr()
            self.A_fb = Kf[:, self.fixed_idx].tocsr()
        else:
            self.A = K.tocsr()
            self.A_fb = None
        if precond == "lu":
            # factor once; the shift only matters for the singular zero-mean case
            self.precond = linalg.lu_preconditioner(self.A, shift=1e-8 if self.zero_mean else 0.0)
        self.conserve_constant = conserve_constant and not fixed.any() and not self.zero_mean
        if self.conserve_constant:
            one = np.ones(self.n)
            self._c_den = float(one @ (self.A @ one))
        self.last_report = None

    def solve(self, load, x0=None, fixed_values=None):
        """Return the full-length solution for the full-length load vector."""
        load = np.asarray(load, dtype=float)
        x = np.zeros(self.n)
        b = load[self.free]
        if fixed_values is not None and self.fixed_idx.size:
            g = np.asarray(fixed_values, dtype=float)
            g = g[self.fixed_idx] if g.shape[0] == self.n else g
            x[self.fixed_idx] = g
            b = b - self.A_fb @ g
        guess = None if x0 is None else np.asarray(x0, dtype=float)[self.free]
        if self.zero_mean:
            xf, rep = linalg.solve_singular_zero_mean(self.A, b, self.weights, tol=self.tol, x0=guess, precond=self.precond)
        else:
            xf, rep = linalg.cg_solve(self.A, b, x0=guess, tol=self.tol, precond=self.precond)
            if self.conserve_constant:
                xf = xf + (b.sum() - (self.A @ xf).sum()) / self._c_den
        if not rep.converged:
            from .errors import SolverError

            raise SolverError(f"CG failed: {rep.iterations} iterations, residual {rep.residual:.3e}")
        self.last_report = rep
        x[self.free] = xf
        return x
