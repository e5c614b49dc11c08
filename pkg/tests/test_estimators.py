import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from surfflow import fem
from surfflow.estimators import HodgeDecomposer
from surfflow.mesh import generate_mesh


@pytest.fixture(scope="module")
def annulus():
    return generate_mesh("annulus", n_radial=3, n_angular=16)


def fields(mesh, rng, n=3):
    X = rng.standard_normal((n, mesh.n_triangles, 3))
    return np.stack([fem.tangential_projection(mesh, x) for x in X]).reshape(n, -1)


def test_fit_transform_inverse(annulus, rng):
    X = fields(annulus, rng)
    est = HodgeDecomposer(mesh=annulus, seed=2)
    Z = est.fit_transform(X)
    assert est.harmonic_dim_ == 1 and est.n_features_in_ == X.shape[1]
    assert Z.shape == (3, annulus.n_edges + annulus.n_vertices + 1)
    assert np.abs(est.inverse_transform(Z) - X).max() < 1e-9
    q, psi, h = est.split(Z)
    assert np.all(psi[:, annulus.boundary_vertex_mask] == 0)
    assert h.shape == (3, 1)


def test_params_and_clone(annulus):
    est = HodgeDecomposer(mesh=annulus, seed=5, tol=1e-11)
    assert est.get_params()["seed"] == 5
    c = clone(est)
    assert c.seed == 5 and not hasattr(c, "basis_")
    assert np.array_equal(c.mesh.vertices, annulus.vertices)


def test_not_fitted_and_shape_checks(annulus, rng):
    est = HodgeDecomposer(mesh=annulus)
    with pytest.raises(NotFittedError):
        est.transform(fields(annulus, rng, 1))
    est.fit()
    with pytest.raises(ValueError, match="features"):
        est.transform(np.zeros((1, 5)))
    with pytest.raises(ValueError, match="mesh"):
        HodgeDecomposer().fit()
