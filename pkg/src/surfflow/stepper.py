"""Explicit Euler time stepping of the streamfunction-vorticity systems.

The velocity is ``V = L + rot_h(psi) + sum_i h_i H_i`` with ``L`` the
boundary lifting (zero for homogeneous conditions). One step of the viscous
scheme updates the streamfunction by a Laplace solve, the harmonic
coefficients by an explicit projection and recovers the vorticity from a P1
mass system. The inviscid scheme (``nu = 0``) evolves the vorticity first and
recovers the streamfunction afterwards.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Union

import numpy as np

from . import fem
from .errors import BlowUpError, ConfigError
from .hodge import HodgeProjector
from .linalg import DEFAULT_TOL, PRECONDITIONERS, assemble
from .mesh import gaussian_curvature_p1

logger = logging.getLogger(__name__)

BLOWUP_FACTOR = 1e8


class StabilityWarning(UserWarning):
    """Time step beyond the explicit diffusion or convection limit."""


@dataclass(frozen=True)
class FlowState:
    """Streamfunction (all P1 dofs, pinned dofs zero), harmonic coefficients,
    vorticity and time."""

    psi: np.ndarray
    h_coeffs: np.ndarray
    omega: np.ndarray
    time: float = 0.0

    def copy(self):
        return FlowState(self.psi.copy(), self.h_coeffs.copy(), self.omega.copy(), self.time)


ForceLike = Union[None, np.ndarray, Callable[[float], np.ndarray]]


@dataclass(frozen=True, eq=False)
class SimConfig:
    """Run parameters.

    Parameters
    ----------
    nu : float
        Viscosity; zero selects the inviscid scheme.
    dt, t_end : float
    force : None, ndarray (n_triangles, 3) or callable ``t -> ndarray``
        Ambient per-element force samples; projected onto the tangent planes.
    curvature_mode : {"angle_defect", "zero"} or float
        Gaussian curvature source. A float is a constant curvature, for which
        the curvature term is assembled in decoupled form.
    tol : float
        Relative CG tolerance of every solve.
    precond : {"jacobi", "lu", "none"}
    decouple_constant_curvature : bool
        Use the decoupled curvature shortcut for constant curvature.
    check_stability : bool
        Warn when ``dt`` exceeds the explicit limits.
    """

    nu: float = 0.0
    dt: float = 1e-3
    t_end: float = 1.0
    force: ForceLike = None
    curvature_mode: Union[str, float] = "angle_defect"
    tol: float = DEFAULT_TOL
    precond: str = "jacobi"
    decouple_constant_curvature: bool = True
    check_stability: bool = True
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        problems = []
        if not self.nu >= 0:
            problems.append(f"nu must be >= 0, got {self.nu}")
        if not self.dt > 0:
            problems.append(f"dt must be > 0, got {self.dt}")
        if not self.dt < self.t_end:
            problems.append(f"dt ({self.dt}) must be smaller than t_end ({self.t_end})")
        cm = self.curvature_mode
        if not (cm in ("angle_defect", "zero") or isinstance(cm, (int, float)) and not isinstance(cm, bool)):
            problems.append(f"curvature_mode must be 'angle_defect', 'zero' or a number, got {cm!r}")
        if self.precond not in PRECONDITIONERS:
            problems.append(f"precond must be one of {PRECONDITIONERS}, got {self.precond!r}")
        if problems:
            raise ConfigError("invalid simulation config", problems)

    @property
    def inviscid(self):
        return self.nu == 0

    @property
    def n_steps(self):
        return int(round(self.t_end / self.dt))


class FlowSolver:
    """Discretization of one run: operators, solvers and boundary data.

    Built once per ``(mesh, basis, config, bc)`` and reused by every step.
    """

    def __init__(self, mesh, basis, config, bc=None):
        if basis.mesh is not mesh:
            raise ValueError("basis was built on a different mesh")
        self.mesh, self.basis, self.config, self.bc = mesh, basis, config, bc
        self.ops = ops = fem.operators(mesh)
        self.spaces = bc.spaces if bc is not None else fem.DofSpaces.homogeneous(mesh)
        self.mixed = bc is not None
        tol, pc = config.tol, config.precond
        self.psi_solver = fem.ConstrainedSolver(ops.rotrot_p1, self.spaces.psi_fixed, weights=mesh.vertex_weights, tol=tol, precond=pc)
        mass = ops.mass_p1
        self._nu_art = bc.artificial_viscosity() if bc is not None else None
        if bc is not None and bc.stabilization is not None and self._nu_art is None:
            mass = (mass + bc.stabilization).tocsr()
        self.mass_solver = fem.ConstrainedSolver(mass, self.spaces.omega_fixed, tol=tol, precond=pc, conserve_constant=mesh.is_closed)
        self.q_solver = fem.ConstrainedSolver(ops.stiffness_cr, self.spaces.q_fixed, weights=mesh.edge_weights, tol=tol, precond=pc)
        self.lifting = np.zeros((mesh.n_triangles, 3)) if bc is None else np.asarray(bc.lifting)
        self._H = basis.fields.reshape(basis.dim, 3 * mesh.n_triangles)

        cm = config.curvature_mode
        self.constant_curvature = None
        if isinstance(cm, str):
            self.kappa = gaussian_curvature_p1(mesh) if cm == "angle_defect" else np.zeros(mesh.n_vertices)
        else:
            self.kappa = np.full(mesh.n_vertices, float(cm))
            if config.decouple_constant_curvature:
                self.constant_curvature = float(cm)
        self._kappa_bar = ops.avg_p1 @ self.kappa

        self._static_force = None
        if config.force is None:
            self._static_force = np.zeros((mesh.n_triangles, 3))
        elif not callable(config.force):
            self._static_force = self._project_force(config.force)

        self._setup_outlet()
        self._stability_checked = False
        self._p_guess = None

    # -- boundary data on the pressure patch ------------------------------
    def _setup_outlet(self):
        self.p_edges = np.zeros(0, dtype=np.int64)
        if self.bc is None:
            return
        mesh = self.mesh
        e = self.bc.patches.pressure_edges(mesh)
        self.p_edges = e
        if e.size == 0:
            return
        n, _, tri = mesh.boundary_edge_normals(e)
        self.p_tri = tri
        rows = np.repeat(np.arange(e.size), 3)
        cols = (3 * tri[:, None] + np.arange(3)).ravel()
        vals = (mesh.edge_lengths[e][:, None] * n).ravel()
        # B @ flat(X) = |e| <X_K, n_e> on each pressure edge
        B = assemble(rows, cols, vals, (e.size, 3 * mesh.n_triangles))
        self._outlet_rot = (B @ self.ops.rot_p1).tocsr()
        self._outlet_H = B @ self._H.T if self.basis.dim else np.zeros((e.size, 0))

    def outlet_data(self, V):
        """Total-pressure data ``g_p + |V_K|^2 / 2`` on pressure edges."""
        V = np.reshape(V, (-1, 3))
        return self.bc.g_p[self.p_edges] + 0.5 * np.einsum("ei,ei->e", V[self.p_tri], V[self.p_tri])

    # -- fields -----------------------------------------------------------
    def _project_force(self, F):
        F = np.asarray(F, dtype=float)
        if F.shape != (self.mesh.n_triangles, 3):
            raise ConfigError("force samples must have shape (n_triangles, 3)", [f"got {F.shape}"])
        return fem.tangential_projection(self.mesh, F)

    def force(self, t):
        if self._static_force is not None:
            return self._static_force
        return self._project_force(self.config.force(t))

    def velocity(self, state):
        V = self.lifting + fem.rot_h(self.mesh, state.psi, "p1")
        if self.basis.dim:
            V = V + self.basis.combine(state.h_coeffs)
        return V

    def residual_field(self, state, V=None, include_curvature=True):
        """``F - omega J V - nu rot(omega) + 2 nu kappa V`` with exact element averages."""
        mesh, ops = self.mesh, self.ops
        V = self.velocity(state) if V is None else V
        wbar = ops.avg_p1 @ state.omega
        G = self.force(state.time) - wbar[:, None] * fem.j_h(mesh, V)
        nu = self.config.nu
        if nu:
            rot_w = fem.rot_h(mesh, state.omega, "p1")
            G = G - nu * rot_w
            if self._nu_art is not None:
                G = G - self._nu_art[:, None] * rot_w
            if include_curvature:
                G = G + 2.0 * nu * self._kappa_bar[:, None] * V
        return G

    # -- stability ----------------------------------------------------------
    def check_stability(self, V):
        if not self.config.check_stability or self._stability_checked:
            return
        self._stability_checked = True
        dt, nu, h = self.config.dt, self.config.nu, self.mesh.h_min
        if self._nu_art is not None:
            nu = nu + float(self._nu_art.max(initial=0.0))
        if nu > 0 and dt > 0.2 * h * h / nu:
            msg = f"dt={dt:g} exceeds the explicit diffusion limit 0.2*h_min^2/nu={0.2 * h * h / nu:g}"
            logger.warning(msg)
            warnings.warn(msg, StabilityWarning, stacklevel=3)
        vmax = float(np.max(np.linalg.norm(V, axis=1), initial=0.0))
        if dt * vmax / h > 0.5:
            msg = f"convective CFL number {dt * vmax / h:.3g} exceeds 0.5"
            logger.warning(msg)
            warnings.warn(msg, StabilityWarning, stacklevel=3)

    def _guard(self, new, old, step_info=""):
        arrays = (new.psi, new.h_coeffs, new.omega)
        ok = all(np.all(np.isfinite(a)) for a in arrays)
        scale = self._blowup_scale
        big = ok and scale > 0 and float(np.max(np.abs(new.omega), initial=0.0)) > BLOWUP_FACTOR * scale
        if not ok or big:
            raise BlowUpError(
                f"blow-up at t={new.time:.6g}{step_info}: max|omega| before step "
                f"{np.max(np.abs(old.omega), initial=0.0):.3e}, dt={self.config.dt:g}, nu={self.config.nu:g}, "
                f"h_min={self.mesh.h_min:.3e}"
            )

    _blowup_scale = 0.0

    def _set_scale(self, state):
        self._blowup_scale = max(1.0, float(np.max(np.abs(state.omega), initial=0.0)))

    # -- initial states -----------------------------------------------------
    def vorticity_from_velocity(self, V, omega_guess=None):
        """P1 vorticity ``(omega, chi) = (V, rot chi) + (g_T, chi)_boundary``."""
        load = self.ops.load_rot_p1(V)
        fixed_vals = None
        if self.bc is not None:
            load = load + self.bc.tangential_load()
            fixed_vals = self.bc.g_omega
        return self.mass_solver.solve(load, x0=omega_guess, fixed_values=fixed_vals)

    def ns_init(self, V0=None, time=0.0):
        mesh = self.mesh
        V0 = np.zeros((mesh.n_triangles, 3)) if V0 is None else np.reshape(np.asarray(V0, dtype=float), (-1, 3))
        X = V0 - self.lifting
        proj = HodgeProjector(mesh, self.spaces, tol=self.config.tol)
        psi = proj.streamfunction(X)
        q = proj.potential(X)
        h = self.basis.coefficients(X)
        grad_part = fem.grad_h_cr(mesh, q)
        gn = np.sqrt(fem.inner_vec(mesh, grad_part, grad_part))
        vn = np.sqrt(fem.inner_vec(mesh, V0, V0))
        if vn > 0 and gn > 1e-8 * vn:
            logger.warning("initial velocity has a gradient part of relative size %.3e; discarded", gn / vn)
        state = FlowState(psi, h, np.zeros(mesh.n_vertices), float(time))
        omega = self.vorticity_from_velocity(self.velocity(state))
        state = replace(state, omega=omega)
        self._set_scale(state)
        return state

    def euler_init(self, h0=None, omega0=None, time=0.0):
        mesh = self.mesh
        omega0 = np.zeros(mesh.n_vertices) if omega0 is None else np.array(omega0, dtype=float)
        if mesh.is_closed:
            w = mesh.vertex_weights
            mean = float(w @ omega0) / w.sum()
            if abs(mean) > 1e-12 * max(1.0, float(np.max(np.abs(omega0), initial=0.0))):
                msg = f"initial vorticity has nonzero mean {mean:.3e} on a closed surface; projected out"
                logger.warning(msg)
                warnings.warn(msg, UserWarning, stacklevel=3)
                omega0 = omega0 - mean
        h0 = np.zeros(self.basis.dim) if h0 is None else np.asarray(h0, dtype=float)
        if h0.shape != (self.basis.dim,):
            raise ValueError(f"expected {self.basis.dim} harmonic coefficients, got {h0.shape}")
        psi = self.psi_solver.solve(self.ops.mass_p1 @ omega0)
        state = FlowState(psi, h0.copy(), omega0, float(time))
        self._set_scale(state)
        return state

    # -- steps --------------------------------------------------------------
    def ns_step(self, state):
        cfg, ops = self.config, self.ops
        dt = cfg.dt
        V = self.velocity(state)
        self.check_stability(V)
        decoupled = self.constant_curvature is not None and cfg.nu > 0
        G = self.residual_field(state, V, include_curvature=not decoupled)

        rot_load = ops.load_rot_p1(G)
        h_load = self.basis.coefficients(G)
        if self.mixed:
            rhs = ops.rotrot_p1 @ state.psi
        else:
            rhs = ops.mass_p1 @ state.omega
        if decoupled:
            c = 2.0 * cfg.nu * self.constant_curvature
            rot_load = rot_load + c * (ops.rotrot_p1 @ state.psi)
            h_load = h_load + c * state.h_coeffs
        if self.p_edges.size:
            data = self.outlet_data(V)
            rot_load = rot_load - self._outlet_rot.T @ data
            h_load = h_load - self._outlet_H.T @ data
        psi = self.psi_solver.solve(rhs + dt * rot_load, x0=state.psi)
        h = state.h_coeffs + dt * h_load
        new = FlowState(psi, h, state.omega, state.time + dt)
        omega = self.vorticity_from_velocity(self.velocity(new), omega_guess=state.omega)
        new = replace(new, omega=omega)
        self._guard(new, state)
        return new

    def euler_step(self, state):
        if self.mixed and (self.p_edges.size or self.spaces.omega_fixed.any()):
            raise NotImplementedError("the inviscid scheme supports homogeneous boundary conditions only")
        mesh, ops, dt = self.mesh, self.ops, self.config.dt
        V = self.velocity(state)
        self.check_stability(V)
        F = self.force(state.time)
        adv = fem.advection_p0(mesh, V, state.omega)
        load = ops.mass_p1 @ state.omega + dt * (ops.load_rot_p1(F) - ops.load_p0_scalar(adv))
        omega = self.mass_solver.solve(load, x0=state.omega)
        wbar = ops.avg_p1 @ state.omega
        h = state.h_coeffs + dt * self.basis.coefficients(F - wbar[:, None] * fem.j_h(mesh, V))
        psi = self.psi_solver.solve(ops.mass_p1 @ omega, x0=state.psi)
        new = FlowState(psi, h, omega, state.time + dt)
        self._guard(new, state)
        return new

    def step(self, state):
        return self.euler_step(state) if self.config.inviscid else self.ns_step(state)

    # -- diagnostics --------------------------------------------------------
    def pressure(self, state):
        """Total pressure ``p*`` (CR). Zero mean unless a pressure patch pins it."""
        G = self.residual_field(state)
        fixed_vals = None
        if self.p_edges.size:
            fixed_vals = self.outlet_data(self.velocity(state))
        p = self.q_solver.solve(self.ops.load_grad_cr(G), x0=self._p_guess, fixed_values=fixed_vals)
        self._p_guess = p
        return p

    def static_pressure(self, state, p_star=None):
        """``p* - |V|^2/2`` per element (CR mean of ``p*`` on each triangle)."""
        p_star = self.pressure(state) if p_star is None else p_star
        V = self.velocity(state)
        return p_star[self.mesh.tri_edges].mean(axis=1) - 0.5 * np.einsum("ti,ti->t", V, V)

    def kinetic_energy(self, state):
        e = float(state.psi @ (self.ops.rotrot_p1 @ state.psi)) + float(state.h_coeffs @ state.h_coeffs)
        if self.mixed and np.any(self.lifting):
            e += fem.inner_vec(self.mesh, self.lifting, self.lifting)
        return 0.5 * e

    def divergence_residual(self, state):
        """Largest relative ``(V, grad q)`` over free CR basis functions.

        On normal-velocity edges the boundary flux ``g_N |e|`` is subtracted.
        """
        V = self.velocity(state)
        free = ~self.spaces.q_fixed
        load = self.ops.load_grad_cr(V)
        if self.bc is not None:
            nv = self.bc.patches.normal_velocity_edges(self.mesh)
            load[nv] -= self.bc.g_N[nv] * self.mesh.edge_lengths[nv]
        load = load[free]
        scale = np.sqrt(self.ops.stiffness_cr.diagonal()[free]) * max(np.sqrt(fem.inner_vec(self.mesh, V, V)), 1e-300)
        return float(np.max(np.abs(load) / scale, initial=0.0))

    def run(self, state, n_steps=None, callback=None):
        """Advance ``n_steps`` (default up to ``t_end``); ``callback(k, state)`` after each."""
        n = self.config.n_steps if n_steps is None else n_steps
        for k in range(1, n + 1):
            state = self.step(state)
            if callback is not None:
                callback(k, state)
        return state


# ---------------------------------------------------------------------------
# functional interface
# ---------------------------------------------------------------------------
_CACHE: list = []
_CACHE_SIZE = 4


def get_solver(mesh, basis, config, bc=None):
    """Cached :class:`FlowSolver` keyed by object identity."""
    for entry in _CACHE:
        if entry[0] is mesh and entry[1] is basis and entry[2] is config and entry[3] is bc:
            return entry[4]
    solver = FlowSolver(mesh, basis, config, bc)
    _CACHE.insert(0, (mesh, basis, config, bc, solver))
    del _CACHE[_CACHE_SIZE:]
    return solver


def ns_init(mesh, basis, V0, config, bc=None):
    return get_solver(mesh, basis, config, bc).ns_init(V0)


def ns_step(state, mesh, basis, config, bc=None):
    return get_solver(mesh, basis, config, bc).ns_step(state)


def euler_init(mesh, basis, h0, omega0, config):
    return get_solver(mesh, basis, config).euler_init(h0, omega0)


def euler_step(state, mesh, basis, config):
    return get_solver(mesh, basis, config).euler_step(state)


def recover_pressure(state, mesh, basis, config, bc=None):
    return get_solver(mesh, basis, config, bc).pressure(state)


def kinetic_energy(state, mesh, basis, bc=None):
    """``|V|^2 / 2``; orthogonality splits it into streamfunction and harmonic parts."""
    ops = fem.operators(mesh)
    e = float(state.psi @ (ops.rotrot_p1 @ state.psi)) + float(np.dot(state.h_coeffs, state.h_coeffs))
    if bc is not None and np.any(bc.lifting):
        e += fem.inner_vec(mesh, bc.lifting, bc.lifting)
    return 0.5 * e


def velocity(state, mesh, basis, bc=None):
    V = fem.rot_h(mesh, state.psi, "p1") + basis.combine(state.h_coeffs)
    if bc is not None:
        V = V + bc.lifting
    return V


__all__ = [
    "BlowUpError",
    "FlowSolver",
    "FlowState",
    "SimConfig",
    "StabilityWarning",
    "euler_init",
    "euler_step",
    "get_solver",
    "kinetic_energy",
    "ns_init",
    "ns_step",
    "recover_pressure",
    "velocity",
]
