"""Discrete Hodge decomposition of P0 tangential fields.

``X = grad_h(q) + rot_h(psi) + sum_i h_i H_i`` with ``q`` a Crouzeix-Raviart
potential, ``psi`` a P1 streamfunction and ``H_i`` an orthonormal basis of
the discrete harmonic fields. The gradient and rotation images are exactly
L2-orthogonal, so the harmonic space is their orthogonal complement.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import fem
from .errors import LinearDependenceError

logger = logging.getLogger(__name__)

BASIS_TOL = 1e-12
PIVOT_TOL = 1e-8
MAX_REDRAWS = 5


@dataclass(frozen=True)
class HarmonicBasis:
    """Orthonormal harmonic fields, shape ``(l, n_triangles, 3)``."""

    fields: np.ndarray
    gram: np.ndarray
    mesh: object
    spaces: fem.DofSpaces

    @property
    def dim(self):
        return len(self.fields)

    def __len__(self):
        return len(self.fields)

    def combine(self, coeffs):
        """``sum_i coeffs[i] H_i`` as a P0 field."""
        coeffs = np.asarray(coeffs, dtype=float)
        if self.dim == 0:
            return np.zeros((self.mesh.n_triangles, 3))
        return np.tensordot(coeffs, self.fields, axes=1)

    def coefficients(self, X):
        """L2 inner products ``(X, H_i)``."""
        if self.dim == 0:
            return np.zeros(0)
        w = self.mesh.elem_area
        return np.einsum("t,kti,ti->k", w, self.fields, np.reshape(X, (-1, 3)))


@dataclass(frozen=True)
class HodgeComponents:
    q: np.ndarray
    psi: np.ndarray
    h_coeffs: np.ndarray
    residual: float


def betti_dimension(mesh):
    """Harmonic-space dimension from the Euler characteristic relation."""
    return mesh.n_edges - mesh.n_vertices - mesh.n_triangles + 1 + (1 if mesh.is_closed else 0)


def harmonic_dimension(mesh, spaces=None):
    """``dim X_h - dim grad_h(Q_h) - dim rot_h(S_h)`` for (patched) spaces."""
    spaces = spaces or fem.DofSpaces.homogeneous(mesh)
    return 2 * mesh.n_triangles - spaces.dim_q() - spaces.dim_psi()


class HodgeProjector:
    """Cached solvers for the rotational and gradient projections."""

    def __init__(self, mesh, spaces=None, tol=BASIS_TOL):
        self.mesh = mesh
        self.spaces = spaces or fem.DofSpaces.homogeneous(mesh)
        self.ops = fem.operators(mesh)
        self.psi_solver = fem.ConstrainedSolver(
            self.ops.rotrot_p1, self.spaces.psi_fixed, weights=mesh.vertex_weights, tol=tol
        )
        self.q_solver = fem.ConstrainedSolver(self.ops.stiffness_cr, self.spaces.q_fixed, weights=mesh.edge_weights, tol=tol)

    def streamfunction(self, X, x0=None):
        """``psi`` with ``(rot psi, rot phi) = (X, rot phi)`` for all test ``phi``."""
        return self.psi_solver.solve(self.ops.load_rot_p1(X), x0=x0)

    def potential(self, X, x0=None):
        """``q`` with ``(grad q, grad r) = (X, grad r)`` for all CR test ``r``."""
        return self.q_solver.solve(self.ops.load_grad_cr(X), x0=x0)

    def remove_exact_parts(self, X):
        X = np.reshape(X, (-1, 3))
        psi = self.streamfunction(X)
        q = self.potential(X)
        return X - fem.rot_h(self.mesh, psi, "p1") - fem.grad_h_cr(self.mesh, q)


def _candidates(mesh, seed, attempt, count):
    out = []
    for k in range(count):
        rng = np.random.Generator(np.random.Philox(key=[seed, attempt * 1_000_003 + k]))
        out.append(fem.tangential_projection(mesh, rng.uniform(-1.0, 1.0, size=(mesh.n_triangles, 3))))
    return out


def _gram_schmidt(fields, weights):
    """Modified Gram-Schmidt with one reorthogonalisation pass.

    Returns the orthonormal list and the ratio of the smallest to the largest
    pivot norm.
    """

    def ip(a, b):
        return float(np.einsum("t,ti,ti->", weights, a, b))

    basis, pivots = [], []
    for y in fields:
        v = y.copy()
        for _ in range(2):
            for b in basis:
                v -= ip(v, b) * b
        nrm = np.sqrt(ip(v, v))
        pivots.append(nrm)
        if nrm == 0.0:
            basis.append(v)
        else:
            basis.append(v / nrm)
    ratio = min(pivots) / max(pivots) if pivots and max(pivots) > 0 else 0.0
    return basis, ratio


def harmonic_basis(mesh, seed=0, spaces=None, tol=BASIS_TOL):
    """Orthonormal basis of the discrete harmonic fields.

    Random tangential fields are stripped of their rotational and gradient
    parts by two Poisson solves and orthonormalised. Candidates are redrawn
    when the projections are numerically dependent.
    """
    spaces = spaces or fem.DofSpaces.homogeneous(mesh)
    dim = harmonic_dimension(mesh, spaces)
    if dim == 0:
        return HarmonicBasis(np.zeros((0, mesh.n_triangles, 3)), np.zeros((0, 0)), mesh, spaces)
    proj = HodgeProjector(mesh, spaces, tol=tol)
    for attempt in range(MAX_REDRAWS + 1):
        ys = [proj.remove_exact_parts(x) for x in _candidates(mesh, seed, attempt, dim)]
        basis, ratio = _gram_schmidt(ys, mesh.elem_area)
        if ratio >= PIVOT_TOL:
            break
        logger.warning("harmonic candidates nearly dependent (pivot ratio %.2e); redrawing", ratio)
    else:
        raise LinearDependenceError(f"no independent harmonic candidates after {MAX_REDRAWS} redraws")
    fields = np.array(basis)
    gram = np.einsum("t,ati,bti->ab", mesh.elem_area, fields, fields)
    return HarmonicBasis(fields, gram, mesh, spaces)


def hodge_decompose(mesh, basis, X, tol=BASIS_TOL, projector=None):
    """Split ``X`` into gradient, rotational and harmonic components."""
    if basis.mesh is not mesh:
        raise ValueError("basis was built on a different mesh")
    X = np.reshape(np.asarray(X, dtype=float), (-1, 3))
    proj = projector or HodgeProjector(mesh, basis.spaces, tol=tol)
    psi = proj.streamfunction(X)
    q = proj.potential(X)
    h = basis.coefficients(X)
    rest = X - fem.grad_h_cr(mesh, q) - fem.rot_h(mesh, psi, "p1") - basis.combine(h)
    res = np.sqrt(fem.inner_vec(mesh, rest, rest))
    return HodgeComponents(q=q, psi=psi, h_coeffs=h, residual=res)


def orthogonality_residuals(mesh, basis, projector=None):
    """Largest relative leakage of the basis into the gradient and rotation images."""
    proj = projector or HodgeProjector(mesh, basis.spaces)
    ops = proj.ops
    worst_g = worst_r = 0.0
    for H in basis.fields:
        lg = ops.load_grad_cr(H)[~basis.spaces.q_fixed]
        lr = ops.load_rot_p1(H)[~basis.spaces.psi_fixed]
        gscale = np.sqrt(ops.stiffness_cr.diagonal()[~basis.spaces.q_fixed])
        rscale = np.sqrt(ops.rotrot_p1.diagonal()[~basis.spaces.psi_fixed])
        worst_g = max(worst_g, float(np.max(np.abs(lg) / gscale, initial=0.0)))
        worst_r = max(worst_r, float(np.max(np.abs(lr) / rscale, initial=0.0)))
    return worst_g, worst_r
