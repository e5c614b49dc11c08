"""scikit-learn style wrapper around the discrete Hodge decomposition."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import fem, hodge


class HodgeDecomposer(TransformerMixin, BaseEstimator):
    """Map flattened P0 tangential fields to Hodge coordinates.

    Each sample is a field of shape ``(n_triangles, 3)`` flattened row-major.
    The transform returns ``[q (n_edges), psi (n_vertices), h (l)]`` per
    sample: the CR potential, the P1 streamfunction and the harmonic
    coefficients.

    Parameters
    ----------
    mesh : SurfaceMesh
    seed : int
        Seed of the harmonic basis construction.
    tol : float
        Relative tolerance of the Poisson solves.
    spaces : DofSpaces, optional
        Patched spaces for mixed boundary conditions.

    Attributes
    ----------
    basis_ : HarmonicBasis
    harmonic_dim_ : int
    n_features_in_ : int
    """

    def __init__(self, mesh=None, seed=0, tol=hodge.BASIS_TOL, spaces=None):
        self.mesh = mesh
        self.seed = seed
        self.tol = tol
        self.spaces = spaces

    def fit(self, X=None, y=None):
        if self.mesh is None:
            raise ValueError("HodgeDecomposer needs a mesh")
        self.basis_ = hodge.harmonic_basis(self.mesh, seed=self.seed, spaces=self.spaces, tol=self.tol)
        self._projector = hodge.HodgeProjector(self.mesh, self.basis_.spaces, tol=self.tol)
        self.harmonic_dim_ = self.basis_.dim
        self.n_features_in_ = 3 * self.mesh.n_triangles
        if X is not None:
            self._check(X)
        return self

    def _check(self, X):
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features (3 per triangle), got {X.shape[1]}")
        return X

    def transform(self, X):
        check_is_fitted(self, "basis_")
        X = self._check(X)
        rows = []
        for x in X:
            c = hodge.hodge_decompose(self.mesh, self.basis_, x, tol=self.tol, projector=self._projector)
            rows.append(np.concatenate([c.q, c.psi, c.h_coeffs]))
        return np.asarray(rows)

    def split(self, Z):
        """Split transformed rows into ``(q, psi, h)`` blocks."""
        Z = np.atleast_2d(Z)
        ne, nv = self.mesh.n_edges, self.mesh.n_vertices
        return Z[:, :ne], Z[:, ne : ne + nv], Z[:, ne + nv :]

    def inverse_transform(self, Z):
        check_is_fitted(self, "basis_")
        Z = check_array(Z, dtype=np.float64)
        out = []
        for q, psi, h in zip(*self.split(Z)):
            X = fem.grad_h_cr(self.mesh, q) + fem.rot_h(self.mesh, psi, "p1") + self.basis_.combine(h)
            out.append(X.ravel())
        return np.asarray(out)
