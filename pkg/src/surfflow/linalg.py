"""Sparse assembly and conjugate-gradient solvers.

Matrices are :class:`scipy.sparse.csr_matrix` instances with sorted,
duplicate-free column indices.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import SolverError

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    residual: float
    converged: bool


def assemble(rows, cols, values, shape):
    """CSR matrix from triplets; duplicates are summed.

    ``rows``/``cols``/``values`` may be given as three arrays, or ``rows`` may
    be an iterable of ``(row, col, value)`` triplets with ``cols`` and
    ``values`` set to ``None``.
    """
    if cols is None and values is None:
        trip = list(rows)
        if trip:
            rows, cols, values = (np.asarray(x) for x in zip(*trip))
        else:
            rows = cols = np.zeros(0, dtype=np.int64)
            values = np.zeros(0)
    rows = np.asarray(rows, dtype=np.int64).ravel()
    cols = np.asarray(cols, dtype=np.int64).ravel()
    values = np.asarray(values, dtype=float)
    values = values.ravel() if values.size == rows.size else np.broadcast_to(values, rows.shape)
    n, m = shape
    if rows.size and (rows.min() < 0 or rows.max() >= n or cols.min() < 0 or cols.max() >= m):
        raise IndexError(f"triplet index out of range for shape {shape}")
    A = sp.coo_matrix((values, (rows, cols)), shape=shape).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def is_symmetric(A, rtol=1e-14):
    D = abs(A - A.T)
    scale = abs(A).max() if A.nnz else 0.0
    return D.nnz == 0 or D.max() <= rtol * max(scale, 1e-300)


PRECONDITIONERS = ("jacobi", "lu", "none")


def lu_preconditioner(A, shift=0.0):
    """Sparse LU of ``A + shift * diag(A)`` as a reusable preconditioner.

    A small ``shift`` makes semi-definite matrices with a constant kernel
    factorizable; the deflated CG iteration stays exact.
    """
    from scipy.sparse import diags
    from scipy.sparse.linalg import splu

    A = A.tocsc()
    if shift:
        A = (A + diags(shift * A.diagonal())).tocsc()
    lu = splu(A)
    return lu.solve


def cg_solve(A, b, x0=None, tol=DEFAULT_TOL, max_iter=None, precond="jacobi", project=None):
    """Preconditioned conjugate gradients for SPD (or deflated SPSD) systems.

    Parameters
    ----------
    A : sparse matrix or LinearOperator-like with ``@``
    b : ndarray
    x0 : ndarray, optional
        Initial guess (warm start).
    tol : float
        Target for ``||b - A x|| / ||b||``.
    max_iter : int, optional
        Defaults to ``10 * n``.
    precond : {"none", "jacobi"} or callable
        A callable maps a residual to the preconditioned residual (see
        :func:`lu_preconditioner`).
    project : callable, optional
        Projection applied to the residual and search directions; used to
        restrict the iteration to a subspace (e.g. zero mean).

    Returns
    -------
    x : ndarray
    report : SolveReport
        ``converged`` is False when ``max_iter`` was exhausted; the best
        iterate is returned in that case.

    Raises
    ------
    SolverError
        On NaN breakdown.
    """
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    if max_iter is None:
        max_iter = 10 * max(n, 1)
    P = project if project is not None else (lambda v: v)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), SolveReport(0, 0.0, True)
    if callable(precond):
        apply = precond
    elif precond == "jacobi":
        d = A.diagonal()
        if np.any(d <= 0):
            raise SolverError("Jacobi preconditioner needs a positive diagonal")
        inv_d = 1.0 / d

        def apply(v):
            return v * inv_d
    elif precond in ("none", None):
        apply = None
    else:
        raise ValueError(f"unknown preconditioner {precond!r}")

    r = P(b - A @ x)
    rnorm = np.linalg.norm(r)
    best_x, best_res = x.copy(), rnorm / bnorm
    if best_res <= tol:
        return x, SolveReport(0, best_res, True)
    z = P(apply(r)) if apply is not None else r
    p = z.copy()
    rz = r @ z
    it = 0
    while it < max_iter:
        it += 1
        Ap = A @ p
        pAp = p @ Ap
        if not np.isfinite(pAp):
            raise SolverError("NaN breakdown in conjugate gradients")
        if pAp <= 0:
            break
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        if it % 50 == 0:  # refresh against drift of the recursive residual
            r = P(b - A @ x)
        else:
            r = P(r)
        rnorm = np.linalg.norm(r)
        res = rnorm / bnorm
        if res < best_res:
            best_res = res
            best_x[:] = x
        if res <= tol:
            true_res = np.linalg.norm(P(b - A @ x)) / bnorm
            if true_res <= tol:
                return x, SolveReport(it, true_res, True)
            r = P(b - A @ x)
        z = P(apply(r)) if apply is not None else r
        rz_new = r @ z
        beta = rz_new / rz
        rz = rz_new
        p = z + beta * p
    if not np.all(np.isfinite(best_x)):
        raise SolverError("NaN breakdown in conjugate gradients")
    logger.warning("CG did not converge: %d iterations, relative residual %.3e", it, best_res)
    return best_x, SolveReport(it, best_res, False)


def zero_mean_projector(weights):
    """Projections for the kernel-of-constants deflation.

    Returns ``(project_load, project_solution)``: the first removes the
    constant-function component ``weights * c`` from a load vector so it sums
    to zero, the second shifts a coefficient vector to zero weighted mean.
    """
    w = np.asarray(weights, dtype=float)
    W = w.sum()

    def project_load(b):
        return b - w * (b.sum() / W)

    def project_solution(x):
        return x - (w @ x) / W

    return project_load, project_solution


def solve_singular_zero_mean(A, b, weights, tol=DEFAULT_TOL, x0=None, max_iter=None, precond="jacobi"):
    """Solve ``A x = b`` where ``ker A`` is the constants, returning zero-mean ``x``.

    The load is projected onto the range first; the iterate is kept in the
    sum-zero residual space and finally shifted to ``sum(weights * x) = 0``.
    """
    project_load, project_solution = zero_mean_projector(weights)
    b = project_load(np.asarray(b, dtype=float))

    def P(v):
        return v - v.mean()

    x, report = cg_solve(A, b, x0=x0, tol=tol, max_iter=max_iter, precond=precond, project=P)
    return project_solution(x), report


def solve_checked(A, b, **kw):
    """:func:`cg_solve` that raises :class:`SolverError` when not converged."""
    x, rep = cg_solve(A, b, **kw)
    if not rep.converged:
        raise SolverError(f"CG failed: {rep.iterations} iterations, residual {rep.residual:.3e}")
    return x, rep
