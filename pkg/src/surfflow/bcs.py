"""Mixed boundary conditions.

The boundary is split twice into disjoint patches: pressure vs. normal
velocity, and vorticity vs. tangential velocity. The patches decide which
dofs of the streamfunction, potential and vorticity spaces are pinned, and
inhomogeneous normal-velocity data enter through a discretely harmonic
gradient field (the lifting).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import fem, hodge
from .linalg import DEFAULT_TOL, assemble

logger = logging.getLogger(__name__)

PRESSURE = "pressure"
NORMAL_VELOCITY = "normal_velocity"
VORTICITY = "vorticity"
TANGENTIAL = "tangential"
# where the outlet term acts: the vorticity evolution (step 1 and harmonic update) or the recovery of omega
STABILIZATION_TARGETS = ("evolution", "recovery")


@dataclass(frozen=True)
class BoundaryPatchLabels:
    """Per-edge patch flags; only boundary edges may be set.

    ``pressure[e]`` selects the pressure patch (else normal velocity) and
    ``vorticity[e]`` the vorticity patch (else tangential velocity).
    """

    pressure: np.ndarray
    vorticity: np.ndarray

    @classmethod
    def homogeneous(cls, mesh):
        z = np.zeros(mesh.n_edges, dtype=bool)
        return cls(pressure=z, vorticity=z.copy())

    def __post_init__(self):
        for name in ("pressure", "vorticity"):
            arr = np.asarray(getattr(self, name), dtype=bool)
            object.__setattr__(self, name, arr)

    def validate(self, mesh):
        b = mesh.boundary_edge_mask
        for name in ("pressure", "vorticity"):
            arr = getattr(self, name)
            if arr.shape != (mesh.n_edges,):
                raise ValueError(f"{name} labels must have one entry per edge")
            if np.any(arr & ~b):
                raise ValueError(f"{name} patch contains interior edges")

    def normal_velocity_edges(self, mesh):
        return np.flatnonzero(mesh.boundary_edge_mask & ~self.pressure)

    def pressure_edges(self, mesh):
        return np.flatnonzero(mesh.boundary_edge_mask & self.pressure)

    def tangential_edges(self, mesh):
        return np.flatnonzero(mesh.boundary_edge_mask & ~self.vorticity)

    def vorticity_edges(self, mesh):
        return np.flatnonzero(mesh.boundary_edge_mask & self.vorticity)


def patched_spaces(mesh, patches):
    """Dof masks of the streamfunction, potential and vorticity spaces.

    Streamfunction dofs vanish on vertices of normal-velocity edges, potential
    (CR) dofs on pressure edges, vorticity dofs carry data on vorticity-patch
    vertices. Empty patches switch to the zero-mean constraint.
    """
    patches.validate(mesh)
    psi_fixed = np.zeros(mesh.n_vertices, dtype=bool)
    psi_fixed[mesh.edges[patches.normal_velocity_edges(mesh)].ravel()] = True
    q_fixed = np.zeros(mesh.n_edges, dtype=bool)
    q_fixed[patches.pressure_edges(mesh)] = True
    omega_fixed = np.zeros(mesh.n_vertices, dtype=bool)
    omega_fixed[mesh.edges[patches.vorticity_edges(mesh)].ravel()] = True
    return fem.DofSpaces(psi_fixed=psi_fixed, q_fixed=q_fixed, omega_fixed=omega_fixed)


def edge_flux(mesh, edge_ids, profile):
    """Exact-for-quadratics (Simpson) integrals of ``profile(points)`` over edges."""
    edge_ids = np.asarray(edge_ids, dtype=np.int64)
    a = mesh.vertices[mesh.edges[edge_ids, 0]]
    b = mesh.vertices[mesh.edges[edge_ids, 1]]
    m = 0.5 * (a + b)
    vals = (np.asarray(profile(a)) + 4 * np.asarray(profile(m)) + np.asarray(profile(b))) / 6.0
    return vals * mesh.edge_lengths[edge_ids]


def build_lifting(mesh, patches, g_N, tol=DEFAULT_TOL):
    """Discretely harmonic gradient field carrying the normal-velocity data.

    Parameters
    ----------
    g_N : ndarray, shape (n_edges,)
        Outward normal velocity per edge (edge average). Entries off the
        normal-velocity patch are ignored.

    Returns
    -------
    potential : ndarray, shape (n_edges,)
        CR potential, zero on pressure-patch edges (zero mean if that patch is
        empty).
    lifting : ndarray, shape (n_triangles, 3)
        Its element gradient. Its normal flux is continuous across interior
        edges and equals ``g_N`` on normal-velocity edges.
    """
    patches.validate(mesh)
    flux = np.zeros(mesh.n_edges)
    nv = patches.normal_velocity_edges(mesh)
    flux[nv] = np.asarray(g_N, dtype=float)[nv] * mesh.edge_lengths[nv]
    if not np.any(flux):
        return np.zeros(mesh.n_edges), np.zeros((mesh.n_triangles, 3))
    q_fixed = np.zeros(mesh.n_edges, dtype=bool)
    q_fixed[patches.pressure_edges(mesh)] = True
    if not q_fixed.any():
        total = flux.sum()
        if abs(total) > 1e-10 * max(1.0, np.abs(flux).sum()):
            raise ValueError(f"inconsistent Neumann data: net flux {total:.3e} without a pressure patch")
    ops = fem.operators(mesh)
    solver = fem.ConstrainedSolver(ops.stiffness_cr, q_fixed, weights=mesh.edge_weights, tol=tol)
    potential = solver.solve(flux)
    return potential, fem.grad_h_cr(mesh, potential)


def discrete_edge_flux(mesh, X, edge_ids):
    """``|e| <X_K, n_e>`` over boundary edges, outward conormal."""
    n, _, tri = mesh.boundary_edge_normals(edge_ids)
    X = np.reshape(X, (-1, 3))
    return mesh.edge_lengths[edge_ids] * np.einsum("ei,ei->e", X[tri], n)


def mixed_harmonic_basis(mesh, patches, seed=0, tol=hodge.BASIS_TOL):
    """Orthonormal complement of the patched gradient and rotation images."""
    return hodge.harmonic_basis(mesh, seed=seed, spaces=patched_spaces(mesh, patches), tol=tol)


def outlet_layer(mesh, patches):
    """Triangles with a vertex on the pressure (outlet) patch."""
    on = np.zeros(mesh.n_vertices, dtype=bool)
    on[mesh.edges[patches.pressure_edges(mesh)].ravel()] = True
    return np.flatnonzero(on[mesh.triangles].any(axis=1))


def outlet_viscosity(mesh, patches, beta=1.0):
    """Per-element artificial viscosity ``beta * h_K^2`` on the outlet layer, zero elsewhere."""
    nu = np.zeros(mesh.n_triangles)
    layer = outlet_layer(mesh, patches)
    nu[layer] = beta * mesh.elem_diameter[layer] ** 2
    return nu


def outlet_stabilization(mesh, patches, beta=1.0):
    """``beta * sum_K h_K^2 (grad w, grad chi)_K`` over the outlet element layer.

    Symmetric positive semi-definite, supported next to the outlet and
    vanishing at second order under refinement.
    """
    layer = outlet_layer(mesh, patches)
    nv = mesh.n_vertices
    if layer.size == 0 or beta == 0:
        return assemble([], [], [], (nv, nv))
    g = mesh.hat_gradients[layer]
    local = np.einsum("tki,tli->tkl", g, g) * (mesh.elem_area[layer] * mesh.elem_diameter[layer] ** 2 * beta)[:, None, None]
    tri = mesh.triangles[layer]
    r = np.repeat(tri[:, :, None], 3, axis=2)
    c = np.repeat(tri[:, None, :], 3, axis=1)
    return assemble(r, c, local, (nv, nv))


@dataclass
class MixedBcSetup:
    """Everything a mixed-BC run needs, built once.

    ``g_N`` is the per-edge outward normal velocity, ``g_p`` per-edge pressure data,
    ``g_T`` per-edge tangential velocity and ``g_omega`` per-vertex vorticity
    data, each read only on its own patch. ``stabilization_target`` selects
    whether the outlet term damps the vorticity evolution (an artificial
    viscosity ``beta h_K^2`` on the outlet layer) or smooths the recovered
    vorticity (``mass + stabilization``).
    """

    mesh: object
    patches: BoundaryPatchLabels
    g_N: np.ndarray
    g_p: np.ndarray
    g_T: np.ndarray
    g_omega: np.ndarray
    spaces: fem.DofSpaces
    potential: np.ndarray
    lifting: np.ndarray
    stabilization: object = None
    obstacle_loop: int | None = None
    stabilization_target: str = "evolution"
    params: dict = field(default_factory=dict)

    @classmethod
    def build(
        cls, mesh, patches, g_N=None, g_p=None, g_T=None, g_omega=None, beta=0.0, obstacle_loop=None, tol=DEFAULT_TOL,
        stabilization_target="evolution",
    ):
        ne, nv = mesh.n_edges, mesh.n_vertices
        g_N = np.zeros(ne) if g_N is None else np.asarray(g_N, dtype=float)
        g_p = np.zeros(ne) if g_p is None else np.asarray(g_p, dtype=float)
        g_T = np.zeros(ne) if g_T is None else np.asarray(g_T, dtype=float)
        g_omega = np.zeros(nv) if g_omega is None else np.asarray(g_omega, dtype=float)
        spaces = patched_spaces(mesh, patches)
        potential, lifting = build_lifting(mesh, patches, g_N, tol=tol)
        if stabilization_target not in STABILIZATION_TARGETS:
            raise ValueError(f"stabilization_target must be one of {STABILIZATION_TARGETS}, got {stabilization_target!r}")
        stab = outlet_stabilization(mesh, patches, beta) if beta else None
        setup = cls(mesh, patches, g_N, g_p, g_T, g_omega, spaces, potential, lifting, stab, obstacle_loop, stabilization_target)
        setup.params["beta"] = beta
        return setup

    def artificial_viscosity(self):
        """Per-element outlet viscosity, or None when the stabilization is off or used in recovery."""
        if self.stabilization is None or self.stabilization_target != "evolution":
            return None
        return outlet_viscosity(self.mesh, self.patches, self.params["beta"])

    @classmethod
    def homogeneous(cls, mesh):
        return cls.build(mesh, BoundaryPatchLabels.homogeneous(mesh))

    def tangential_load(self):
        """``(g_T, chi)`` on tangential edges for every P1 hat ``chi``."""
        load = np.zeros(self.mesh.n_vertices)
        e = self.patches.tangential_edges(self.mesh)
        if e.size and np.any(self.g_T[e]):
            half = 0.5 * self.g_T[e] * self.mesh.edge_lengths[e]
            np.add.at(load, self.mesh.edges[e, 0], half)
            np.add.at(load, self.mesh.edges[e, 1], half)
        return load


def schafer_turek_patches(mesh, length=2.2, tol=1e-9):
    """Outlet at ``x = length`` is the pressure patch; everything is tangential."""
    b = mesh.boundary_edge_mask
    mid = mesh.edge_midpoints
    outlet = b & (mid[:, 0] >= length - tol)
    return BoundaryPatchLabels(pressure=outlet, vorticity=np.zeros(mesh.n_edges, dtype=bool))


def parabolic_inflow(y, height=0.41, v_max=1.5):
    """Inlet profile ``4 v_max y (H - y) / H^2``."""
    return 4.0 * v_max * y * (height - y) / height**2


def schafer_turek_setup(mesh, length=2.2, height=0.41, v_max=1.5, beta=1.0, tol=1e-9, stabilization_target="evolution"):
    """Mixed-BC setup of the channel benchmark: parabolic inflow, no-slip, open outlet."""
    patches = schafer_turek_patches(mesh, length, tol)
    mid = mesh.edge_midpoints
    inlet = np.flatnonzero(mesh.boundary_edge_mask & (mid[:, 0] <= tol))
    g_N = np.zeros(mesh.n_edges)
    profile = edge_flux(mesh, inlet, lambda p: parabolic_inflow(p[:, 1], height, v_max))
    g_N[inlet] = -profile / mesh.edge_lengths[inlet]
    loops = [i for i, e in enumerate(mesh.boundary_loop_edges) if not np.any(patches.pressure[e])]
    obstacle = loops[-1] if loops else None
    setup = MixedBcSetup.build(
        mesh, patches, g_N=g_N, beta=beta, obstacle_loop=obstacle, stabilization_target=stabilization_target
    )
    setup.params.update(length=length, height=height, v_max=v_max)
    return setup
