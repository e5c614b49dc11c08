"""Benchmark setups and metrics.

Cylinder-in-channel drag/lift/shedding frequency (flat and on a pierced
cylinder surface) and the shear-layer initial condition on a torus.
"""

from __future__ import annotations

import csv
import io
import logging
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components

from . import bcs, fem, hodge
from .errors import MeshError
from .linalg import assemble
from .mesh import generate_mesh
from .stepper import FlowSolver, SimConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class StBenchParams:
    """Channel-with-cylinder benchmark constants."""

    diameter: float = 0.1
    v_mean: float = 1.0
    v_max: float = 1.5
    nu: float = 1e-3
    length: float = 2.2
    height: float = 0.41
    center: tuple = (0.2, 0.2)
    radius: float = 0.05

    @property
    def reynolds(self):
        return self.v_mean * self.diameter / self.nu


@dataclass
class ForceSeries:
    """Time series of drag and lift coefficients."""

    t: list = field(default_factory=list)
    cd: list = field(default_factory=list)
    cl: list = field(default_factory=list)

    def append(self, t, cd, cl):
        if self.t and t <= self.t[-1]:
            raise ValueError("force series times must increase strictly")
        self.t.append(float(t))
        self.cd.append(float(cd))
        self.cl.append(float(cl))

    def __len__(self):
        return len(self.t)

    def arrays(self):
        return np.asarray(self.t), np.asarray(self.cd), np.asarray(self.cl)

    def to_csv(self, path):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "cd", "cl"])
        for row in zip(self.t, self.cd, self.cl):
            w.writerow([repr(x) for x in row])
        atomic_write_text(path, buf.getvalue())

    @classmethod
    def from_csv(cls, path):
        out = cls()
        with open(path, newline="") as fh:
            rows = csv.reader(fh)
            header = next(rows)
            if header != ["t", "cd", "cl"]:
                raise ValueError(f"unexpected header {header}")
            for t, cd, cl in rows:
                out.append(float(t), float(cd), float(cl))
        return out


def atomic_write_text(path, text):
    """Write ``text`` to ``path`` via a temporary file and rename."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# forces
# ---------------------------------------------------------------------------
def obstacle_edges(mesh, bc=None, loop=None):
    """Edge ids of the obstacle boundary loop."""
    if loop is None and bc is not None:
        loop = bc.obstacle_loop
    if loop is None:
        raise MeshError("no obstacle boundary loop identified")
    return np.asarray(mesh.boundary_loop_edges[loop])


def obstacle_force(mesh, edges, p_star, omega, nu):
    """Force ``int (-p N + nu omega T) ds`` on the obstacle, midpoint rule.

    ``N`` is the obstacle's outward normal (pointing into the fluid) and
    ``T = J N``. ``p_star`` is a CR field (one value per edge) and ``omega``
    a P1 field. Returns the ambient force vector's x and y components.
    """
    edges = np.asarray(edges, dtype=np.int64)
    if edges.size == 0:
        raise MeshError("empty obstacle edge set")
    n_out, _, tri = mesh.boundary_edge_normals(edges)
    N = -n_out
    T = np.cross(mesh.elem_normal[tri], N)
    ln = mesh.edge_lengths[edges]
    w_mid = 0.5 * (omega[mesh.edges[edges, 0]] + omega[mesh.edges[edges, 1]])
    p = np.asarray(p_star)[edges]
    F = np.einsum("e,ei->i", ln, -p[:, None] * N + nu * w_mid[:, None] * T)
    return float(F[0]), float(F[1])


def coefficients(F_D, F_L, params=None):
    """``C = 2 F / (V_mean^2 L)``."""
    params = params or StBenchParams()
    s = 2.0 / (params.v_mean**2 * params.diameter)
    return s * F_D, s * F_L


def strouhal(series, t_start=10.0, params=None, min_periods=3):
    """Shedding frequency from upward zero crossings of the centred lift.

    Raises
    ------
    ValueError
        With fewer than ``min_periods`` full periods after ``t_start``.
    """
    params = params or StBenchParams()
    t, _, cl = series.arrays() if isinstance(series, ForceSeries) else map(np.asarray, series)
    sel = t >= t_start
    t, cl = t[sel], cl[sel]
    if t.size < 3:
        raise ValueError("not enough samples after t_start")
    s = cl - cl.mean()
    up = np.flatnonzero((s[:-1] < 0) & (s[1:] >= 0))
    if up.size < min_periods + 1:
        raise ValueError(f"insufficient lift periods: {max(up.size - 1, 0)} < {min_periods}")
    tc = t[up] - s[up] * (t[up + 1] - t[up]) / (s[up + 1] - s[up])
    f = 1.0 / np.mean(np.diff(tc))
    return params.diameter * f / params.v_mean


def summarize(series, t_start=10.0, params=None):
    """Extremal coefficients and Strouhal number after the transient."""
    t, cd, cl = series.arrays()
    sel = t >= t_start
    out = {
        "cd_min": float(cd[sel].min()),
        "cd_max": float(cd[sel].max()),
        "cl_min": float(cl[sel].min()),
        "cl_max": float(cl[sel].max()),
    }
    try:
        out["st"] = strouhal(series, t_start, params)
    except ValueError as exc:
        logger.warning("Strouhal number unavailable: %s", exc)
        out["st"] = float("nan")
    return out


# ---------------------------------------------------------------------------
# Kelvin-Helmholtz torus
# ---------------------------------------------------------------------------
def _check_torus(mesh):
    if not mesh.is_closed or mesh.genus != 1:
        raise MeshError("shear-layer initial condition needs a torus mesh")


def kh_torus_initial_velocity(mesh, v_inf=1.0, delta0=0.2, c_n=0.02, n_mode=4):
    """Counter-rotating shear layer about the y axis plus a ``cos(n theta)`` kick.

    The shear part is sampled at centroids and projected onto the tangent
    planes. The perturbation is ``c_n r exp(-y^2/delta0^2) rot_h(psi0)`` with
    ``psi0`` the P1 interpolant of ``cos(n_mode theta)``, ``theta`` the angle
    about the y axis and ``r`` the distance from it.
    """
    _check_torus(mesh)
    c = mesh.centroids
    x, y, z = c[:, 0], c[:, 1], c[:, 2]
    swirl = np.stack([z, np.zeros_like(z), -x], axis=1)
    V = fem.tangential_projection(mesh, v_inf * np.tanh(y / delta0)[:, None] * swirl)
    vx = mesh.vertices
    psi0 = np.cos(n_mode * np.arctan2(vx[:, 2], vx[:, 0]))
    amp = c_n * np.hypot(x, z) * np.exp(-(y**2) / delta0**2)
    return V + amp[:, None] * fem.rot_h(mesh, psi0, "p1")


def kh_torus_mesh(n_theta=96, n_phi=32):
    return generate_mesh("torus", n_theta=n_theta, n_phi=n_phi, major_radius=2.0, minor_radius=1.0)


# ---------------------------------------------------------------------------
# pierced cylinder
# ---------------------------------------------------------------------------
def pierced_ring_force(mesh, magnitude=0.1):
    """Azimuthal force about the z axis, tangential, ``|F_K| = magnitude``.

    Orientation: clockwise when looking along +z (from below), so the torque
    about +z is positive.
    """
    c = mesh.centroids
    e_theta = np.stack([-c[:, 1], c[:, 0], np.zeros(len(c))], axis=1)
    F = fem.tangential_projection(mesh, e_theta)
    nrm = np.linalg.norm(F, axis=1)
    if np.any(nrm < 1e-14):
        raise MeshError("azimuthal direction degenerate on some element")
    return magnitude * F / nrm[:, None]


def mean_azimuthal_speed(mesh, V):
    """Area-weighted mean of ``<V_K, e_theta>`` about the z axis."""
    c = mesh.centroids
    r = np.hypot(c[:, 0], c[:, 1])
    e_theta = np.stack([-c[:, 1], c[:, 0], np.zeros(len(c))], axis=1) / np.maximum(r, 1e-300)[:, None]
    return float(np.sum(mesh.elem_area * np.einsum("ti,ti->t", np.reshape(V, (-1, 3)), e_theta)) / mesh.elem_area.sum())


def torque_z(mesh, F):
    """``sum_K |K| (c_K x F_K) . e_z``."""
    c = mesh.centroids
    return float(np.sum(mesh.elem_area * (c[:, 0] * F[:, 1] - c[:, 1] * F[:, 0])))


def hole_loop(mesh):
    """Index of the shortest boundary loop (the hole of a pierced cylinder)."""
    if not mesh.boundary_loops:
        raise MeshError("mesh has no boundary")
    lengths = [mesh.edge_lengths[e].sum() for e in mesh.boundary_loop_edges]
    return int(np.argmin(lengths))


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------
def _vertex_graph(mesh):
    e = mesh.edges
    nv = mesh.n_vertices
    return assemble(np.r_[e[:, 0], e[:, 1]], np.r_[e[:, 1], e[:, 0]], 1.0, (nv, nv))


def vortex_census(omega, mesh, threshold_fraction=0.5, per_sign=False):
    """Connected vertex clusters with ``|omega| >= threshold * max|omega|``.

    Positive and negative clusters are counted separately. Returns the total,
    or ``(n_positive, n_negative)`` with ``per_sign``.
    """
    if not 0 < threshold_fraction < 1:
        raise ValueError("threshold_fraction must lie in (0, 1)")
    omega = np.asarray(omega, dtype=float)
    peak = float(np.max(np.abs(omega), initial=0.0))
    counts = []
    for sign in (1.0, -1.0):
        if peak == 0:
            counts.append(0)
            continue
        mask = sign * omega >= threshold_fraction * peak
        idx = np.flatnonzero(mask)
        if idx.size == 0:
            counts.append(0)
            continue
        A = _vertex_graph(mesh)[idx][:, idx]
        counts.append(int(connected_components(A, directed=False)[0]))
    return tuple(counts) if per_sign else sum(counts)


# ---------------------------------------------------------------------------
# drivers
# ---------------------------------------------------------------------------
def schafer_turek_problem(h=0.02, dt=6.4e-4, t_end=25.0, params=None, beta=1.0, seed=0, tol=1e-10, **mesh_kw):
    """Mesh, harmonic basis, config, boundary setup and solver of the channel run."""
    params = params or StBenchParams()
    mesh = generate_mesh(
        "channel_with_hole", length=params.length, height=params.height, center=params.center, radius=params.radius, h=h, **mesh_kw
    )
    bc = bcs.schafer_turek_setup(mesh, params.length, params.height, params.v_max, beta=beta)
    basis = bcs.mixed_harmonic_basis(mesh, bc.patches, seed=seed)
    cfg = SimConfig(nu=params.nu, dt=dt, t_end=t_end, curvature_mode="zero", tol=tol)
    return FlowSolver(mesh, basis, cfg, bc)


def pierced_ring_problem(h=0.02, dt=1e-3, t_end=50.0, nu=1e-3, seed=0, tol=1e-10):
    mesh = generate_mesh("cylinder_with_hole", h=h)
    basis = hodge.harmonic_basis(mesh, seed=seed)
    cfg = SimConfig(nu=nu, dt=dt, t_end=t_end, force=pierced_ring_force(mesh), curvature_mode="angle_defect", tol=tol)
    bc = bcs.MixedBcSetup.homogeneous(mesh)
    bc.obstacle_loop = hole_loop(mesh)
    return FlowSolver(mesh, basis, cfg, bc)


def record_forces(solver, stride=1, params=None, callback=None):
    """Run ``solver`` from rest, sampling drag and lift every ``stride`` steps."""
    params = params or StBenchParams()
    edges = obstacle_edges(solver.mesh, solver.bc)
    state = solver.ns_init(None)
    series = ForceSeries()

    def sample(k, st):
        if k % stride == 0:
            p = solver.pressure(st)
            fd, fl = obstacle_force(solver.mesh, edges, p, st.omega, solver.config.nu)
            cd, cl = coefficients(fd, fl, params)
            series.append(st.time, cd, cl)
        if callback is not None:
            callback(k, st)

    state = solver.run(state, callback=sample)
    return state, series
