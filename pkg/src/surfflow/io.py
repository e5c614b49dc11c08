"""Run configuration, simulation driver and file output.

Configs are TOML files with the sections ``[mesh]``, ``[sim]``, ``[force]``,
``[initial]``, ``[boundary]`` and ``[output]``. Unknown keys are errors.
"""

from __future__ import annotations

import logging
import math
import os
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import bcs, bench, fem, hodge
from .errors import ConfigError, MeshError
from .linalg import PRECONDITIONERS
from .mesh import GENERATORS, generate_mesh, load_mesh
from .stepper import FlowSolver, SimConfig

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

logger = logging.getLogger(__name__)

SCHEMES = ("navier_stokes", "euler")
FORCE_KINDS = ("none", "constant", "azimuthal")
INITIAL_KINDS = ("zero", "harmonic", "kh_torus", "random_vorticity", "bessel_disk")
BOUNDARY_KINDS = ("homogeneous", "mixed", "schafer_turek")

_SCHEMA = {
    "": {"scheme", "seed", "threads", "mesh", "sim", "force", "initial", "boundary", "output"},
    "mesh": {"generator", "file", "params"},
    "sim": {"nu", "dt", "t_end", "curvature_mode", "curvature", "tol", "precond", "check_stability"},
    "force": {"kind", "vector", "magnitude"},
    "initial": {"kind", "h_coeffs", "amplitude", "v_inf", "delta0", "c_n"},
    "boundary": {"kind", "beta", "stabilization_target", "obstacle_loop", "pressure", "vorticity", "inflow", "length", "height", "v_max"},
    "boundary.selector": {"loop", "bbox"},
    "boundary.inflow": {"loop", "bbox", "profile", "value", "height", "v_max", "axis"},
    "output": {"vtk_stride", "csv", "force_csv", "snapshot_stride", "log_stride"},
}


@dataclass
class OutputSpec:
    vtk_stride: int = 0
    csv: str = "series.csv"
    force_csv: str = "forces.csv"
    snapshot_stride: int = 0
    log_stride: int = 100


@dataclass
class RunConfig:
    """Fully validated run description."""

    mesh: dict
    scheme: str = "navier_stokes"
    sim: dict = field(default_factory=dict)
    force: dict = field(default_factory=lambda: {"kind": "none"})
    initial: dict = field(default_factory=lambda: {"kind": "zero"})
    boundary: dict = field(default_factory=lambda: {"kind": "homogeneous"})
    output: OutputSpec = field(default_factory=OutputSpec)
    seed: int = 0
    threads: int = 1
    source: str | None = None

    @property
    def nu(self):
        return 0.0 if self.scheme == "euler" else float(self.sim.get("nu", 0.0))

    @property
    def reynolds(self):
        """``v_mean * diameter / nu`` for channel-benchmark configs."""
        b = self.boundary
        v_max = b.get("v_max", 1.5)
        diameter = 2.0 * self.mesh.get("params", {}).get("radius", 0.05)
        return (2.0 / 3.0) * v_max * diameter / self.nu


def _check_keys(table, schema_key, where, problems):
    allowed = _SCHEMA[schema_key]
    for k in table:
        if k not in allowed:
            problems.append(f"unknown key '{where}{k}'")


def _as_float(d, key, where, problems, default=None, positive=False, nonneg=False):
    v = d.get(key, default)
    if v is None:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        problems.append(f"{where}{key} must be a finite number, got {v!r}")
        return default
    if positive and not v > 0:
        problems.append(f"{where}{key} must be > 0, got {v}")
    if nonneg and not v >= 0:
        problems.append(f"{where}{key} must be >= 0, got {v}")
    return float(v)


def _as_int(d, key, where, problems, default, minimum=None):
    v = d.get(key, default)
    if isinstance(v, bool) or not isinstance(v, int):
        problems.append(f"{where}{key} must be an integer, got {v!r}")
        return default
    if minimum is not None and v < minimum:
        problems.append(f"{where}{key} must be >= {minimum}, got {v}")
    return v


def _check_selector(sel, where, schema, problems):
    if not isinstance(sel, dict):
        problems.append(f"{where} must be a table")
        return
    _check_keys(sel, schema, where + ".", problems)
    if "loop" in sel and (isinstance(sel["loop"], bool) or not isinstance(sel["loop"], int)):
        problems.append(f"{where}.loop must be an integer")
    if "bbox" in sel:
        bb = sel["bbox"]
        if not (isinstance(bb, list) and len(bb) == 6 and all(isinstance(x, (int, float)) for x in bb)):
            problems.append(f"{where}.bbox must be six numbers [xmin, xmax, ymin, ymax, zmin, zmax]")


def validate_config(data, source=None):
    """Validate a parsed TOML mapping and return a :class:`RunConfig`.

    Every violation is collected before raising :class:`ConfigError`.
    """
    problems = []
    _check_keys(data, "", "", problems)
    scheme = data.get("scheme", "navier_stokes")
    if scheme not in SCHEMES:
        problems.append(f"scheme must be one of {SCHEMES}, got {scheme!r}")
    seed = _as_int(data, "seed", "", problems, 0, minimum=0)
    threads = _as_int(data, "threads", "", problems, 1, minimum=1)

    mesh = dict(data.get("mesh", {}))
    _check_keys(mesh, "mesh", "mesh.", problems)
    if ("generator" in mesh) == ("file" in mesh):
        problems.append("mesh needs exactly one of 'generator' or 'file'")
    if "generator" in mesh and mesh["generator"] not in GENERATORS:
        problems.append(f"mesh.generator must be one of {sorted(GENERATORS)}, got {mesh['generator']!r}")
    if "params" in mesh and not isinstance(mesh["params"], dict):
        problems.append("mesh.params must be a table")

    sim = dict(data.get("sim", {}))
    _check_keys(sim, "sim", "sim.", problems)
    dt = _as_float(sim, "dt", "sim.", problems, default=None, positive=True)
    if dt is None and "dt" not in sim:
        problems.append("sim.dt is required")
    t_end = _as_float(sim, "t_end", "sim.", problems, default=None, positive=True)
    if t_end is None and "t_end" not in sim:
        problems.append("sim.t_end is required")
    if dt and t_end and dt > 0 and not dt < t_end:
        problems.append(f"sim.dt ({dt}) must be smaller than sim.t_end ({t_end})")
    _as_float(sim, "nu", "sim.", problems, default=0.0, nonneg=True)
    if scheme == "navier_stokes" and sim.get("nu", 0.0) == 0:
        problems.append("sim.nu must be > 0 for scheme 'navier_stokes' (use scheme 'euler' for nu = 0)")
    if scheme == "euler" and sim.get("nu", 0.0) not in (0, 0.0):
        logger.warning("scheme 'euler' ignores sim.nu=%s", sim.get("nu"))
    cm = sim.get("curvature_mode", "angle_defect")
    if cm not in ("angle_defect", "zero", "constant"):
        problems.append(f"sim.curvature_mode must be 'angle_defect', 'zero' or 'constant', got {cm!r}")
    if cm == "constant":
        _as_float(sim, "curvature", "sim.", problems, default=None)
        if "curvature" not in sim:
            problems.append("sim.curvature is required when curvature_mode = 'constant'")
    _as_float(sim, "tol", "sim.", problems, default=1e-10, positive=True)
    if sim.get("precond", "jacobi") not in PRECONDITIONERS:
        problems.append(f"sim.precond must be one of {PRECONDITIONERS}, got {sim.get('precond')!r}")

    force = dict(data.get("force", {"kind": "none"}))
    _check_keys(force, "force", "force.", problems)
    if force.get("kind", "none") not in FORCE_KINDS:
        problems.append(f"force.kind must be one of {FORCE_KINDS}, got {force.get('kind')!r}")
    if force.get("kind") == "constant":
        v = force.get("vector")
        if not (isinstance(v, list) and len(v) == 3 and all(isinstance(x, (int, float)) for x in v)):
            problems.append("force.vector must be three numbers for kind 'constant'")
    if force.get("kind") == "azimuthal":
        _as_float(force, "magnitude", "force.", problems, default=0.1, positive=True)

    initial = dict(data.get("initial", {"kind": "zero"}))
    _check_keys(initial, "initial", "initial.", problems)
    if initial.get("kind", "zero") not in INITIAL_KINDS:
        problems.append(f"initial.kind must be one of {INITIAL_KINDS}, got {initial.get('kind')!r}")
    for key in ("amplitude", "v_inf", "delta0", "c_n"):
        if key in initial:
            _as_float(initial, key, "initial.", problems)

    boundary = dict(data.get("boundary", {"kind": "homogeneous"}))
    _check_keys(boundary, "boundary", "boundary.", problems)
    bkind = boundary.get("kind", "homogeneous")
    if bkind not in BOUNDARY_KINDS:
        problems.append(f"boundary.kind must be one of {BOUNDARY_KINDS}, got {bkind!r}")
    if "beta" in boundary:
        _as_float(boundary, "beta", "boundary.", problems, nonneg=True)
    if boundary.get("stabilization_target", "evolution") not in bcs.STABILIZATION_TARGETS:
        problems.append(
            f"boundary.stabilization_target must be one of {bcs.STABILIZATION_TARGETS}, "
            f"got {boundary.get('stabilization_target')!r}"
        )
    for name in ("pressure", "vorticity"):
        sels = boundary.get(name, [])
        if not isinstance(sels, list):
            problems.append(f"boundary.{name} must be an array of tables")
            continue
        for i, s in enumerate(sels):
            _check_selector(s, f"boundary.{name}[{i}]", "boundary.selector", problems)
    inflows = boundary.get("inflow", [])
    if not isinstance(inflows, list):
        problems.append("boundary.inflow must be an array of tables")
        inflows = []
    for i, s in enumerate(inflows):
        _check_selector(s, f"boundary.inflow[{i}]", "boundary.inflow", problems)
        if isinstance(s, dict) and s.get("profile", "constant") not in ("constant", "parabolic"):
            problems.append(f"boundary.inflow[{i}].profile must be 'constant' or 'parabolic'")
    if scheme == "euler" and bkind != "homogeneous":
        problems.append("scheme 'euler' supports boundary.kind = 'homogeneous' only")

    out = dict(data.get("output", {}))
    _check_keys(out, "output", "output.", problems)
    output = OutputSpec(
        vtk_stride=_as_int(out, "vtk_stride", "output.", problems, 0, minimum=0),
        csv=str(out.get("csv", "series.csv")),
        force_csv=str(out.get("force_csv", "forces.csv")),
        snapshot_stride=_as_int(out, "snapshot_stride", "output.", problems, 0, minimum=0),
        log_stride=_as_int(out, "log_stride", "output.", problems, 100, minimum=1),
    )

    if problems:
        raise ConfigError(f"invalid config{' ' + str(source) if source else ''}", problems)
    if scheme == "euler":
        sim["nu"] = 0.0
    return RunConfig(
        mesh=mesh,
        scheme=scheme,
        sim=sim,
        force=force,
        initial=initial,
        boundary=boundary,
        output=output,
        seed=seed,
        threads=threads,
        source=str(source) if source else None,
    )


def parse_config(path):
    """Read and validate a TOML run config.

    Raises
    ------
    ConfigError
        On missing files, syntax errors (with line numbers) and every
        semantic violation.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config_text(text, source=path)


def parse_config_text(text, source=None):
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"syntax error in {source or 'config'}: {exc}") from None
    cfg = validate_config(data, source)
    if source is not None and "file" in cfg.mesh:
        f = Path(cfg.mesh["file"])
        if not f.is_absolute():
            cfg.mesh["file"] = str(Path(source).parent / f)
    return cfg


def shipped_config(name):
    """Path-like handle of a config bundled with the package."""
    return resources.files("surfflow") / "configs" / name


def load_shipped_config(name):
    return parse_config_text(shipped_config(name).read_text(), source=name)


# ---------------------------------------------------------------------------
# building the run
# ---------------------------------------------------------------------------
def build_mesh(cfg):
    if "file" in cfg.mesh:
        return load_mesh(cfg.mesh["file"])
    try:
        return generate_mesh(cfg.mesh["generator"], **cfg.mesh.get("params", {}))
    except TypeError as exc:
        raise ConfigError(f"bad mesh.params: {exc}") from None


def _select_edges(mesh, selectors):
    mask = np.zeros(mesh.n_edges, dtype=bool)
    mid = mesh.edge_midpoints
    for sel in selectors:
        m = mesh.boundary_edge_mask.copy()
        if "loop" in sel:
            loops = mesh.boundary_loop_edges
            if not 0 <= sel["loop"] < len(loops):
                raise ConfigError(f"boundary loop {sel['loop']} does not exist ({len(loops)} loops)")
            lm = np.zeros(mesh.n_edges, dtype=bool)
            lm[loops[sel["loop"]]] = True
            m &= lm
        if "bbox" in sel:
            b = sel["bbox"]
            for ax in range(3):
                m &= (mid[:, ax] >= b[2 * ax]) & (mid[:, ax] <= b[2 * ax + 1])
        mask |= m
    return mask


def build_boundary(cfg, mesh):
    b = cfg.boundary
    kind = b.get("kind", "homogeneous")
    beta = float(b.get("beta", 1.0))
    target = b.get("stabilization_target", "evolution")
    if kind == "homogeneous":
        if "obstacle_loop" in b:
            setup = bcs.MixedBcSetup.homogeneous(mesh)
            setup.obstacle_loop = int(b["obstacle_loop"])
            return setup
        return None
    if kind == "schafer_turek":
        setup = bcs.schafer_turek_setup(
            mesh, length=b.get("length", 2.2), height=b.get("height", 0.41), v_max=b.get("v_max", 1.5), beta=beta,
            stabilization_target=target,
        )
        if "obstacle_loop" in b:
            setup.obstacle_loop = int(b["obstacle_loop"])
        return setup
    patches = bcs.BoundaryPatchLabels(
        pressure=_select_edges(mesh, b.get("pressure", [])), vorticity=_select_edges(mesh, b.get("vorticity", []))
    )
    g_N = np.zeros(mesh.n_edges)
    for inflow in b.get("inflow", []):
        e = np.flatnonzero(_select_edges(mesh, [inflow]))
        if inflow.get("profile", "constant") == "parabolic":
            axis = int(inflow.get("axis", 1))
            height, v_max = inflow.get("height", 0.41), inflow.get("v_max", 1.5)
            flux = bcs.edge_flux(mesh, e, lambda p: bcs.parabolic_inflow(p[:, axis], height, v_max))
            g_N[e] = -flux / mesh.edge_lengths[e]
        else:
            g_N[e] = float(inflow.get("value", 0.0))
    return bcs.MixedBcSetup.build(
        mesh, patches, g_N=g_N, beta=beta if patches.pressure.any() else 0.0,
        obstacle_loop=b.get("obstacle_loop"), stabilization_target=target,
    )


def build_sim_config(cfg, mesh):
    s = cfg.sim
    force = None
    fk = cfg.force.get("kind", "none")
    if fk == "constant":
        force = np.tile(np.asarray(cfg.force["vector"], dtype=float), (mesh.n_triangles, 1))
    elif fk == "azimuthal":
        force = bench.pierced_ring_force(mesh, cfg.force.get("magnitude", 0.1))
    cm = s.get("curvature_mode", "angle_defect")
    if cm == "constant":
        cm = float(s["curvature"])
    return SimConfig(
        nu=cfg.nu,
        dt=float(s["dt"]),
        t_end=float(s["t_end"]),
        force=force,
        curvature_mode=cm,
        tol=float(s.get("tol", 1e-10)),
        precond=s.get("precond", "jacobi"),
        check_stability=bool(s.get("check_stability", True)),
    )


def initial_state(cfg, solver, rng):
    ini = cfg.initial
    kind = ini.get("kind", "zero")
    mesh, basis = solver.mesh, solver.basis
    if kind == "harmonic":
        h = np.asarray(ini.get("h_coeffs", [1.0] + [0.0] * (basis.dim - 1)), dtype=float)
        if h.shape != (basis.dim,):
            raise ConfigError(f"initial.h_coeffs needs {basis.dim} entries, got {h.size}")
        if cfg.scheme == "euler":
            return solver.euler_init(h, None)
        return solver.ns_init(basis.combine(h) + solver.lifting)
    if kind == "kh_torus":
        V0 = bench.kh_torus_initial_velocity(
            mesh, v_inf=ini.get("v_inf", 1.0), delta0=ini.get("delta0", 0.2), c_n=ini.get("c_n", 0.02)
        )
        if cfg.scheme == "euler":
            omega = solver.vorticity_from_velocity(V0)
            return solver.euler_init(basis.coefficients(V0), omega)
        return solver.ns_init(V0)
    if kind == "random_vorticity":
        omega = ini.get("amplitude", 1.0) * rng.standard_normal(mesh.n_vertices)
        if mesh.is_closed:
            w = mesh.vertex_weights
            omega -= (w @ omega) / w.sum()
        if cfg.scheme == "euler":
            return solver.euler_init(None, omega)
        tmp = solver.euler_init(None, omega)
        return solver.ns_init(solver.velocity(tmp))
    if kind == "bessel_disk":
        omega = ini.get("amplitude", 1.0) * bessel_mode(mesh)
        if cfg.scheme == "euler":
            return solver.euler_init(None, omega)
        tmp = solver.euler_init(None, omega)
        return solver.ns_init(solver.velocity(tmp))
    if cfg.scheme == "euler":
        return solver.euler_init(None, None)
    return solver.ns_init(None)


def bessel_mode(mesh):
    """``J0(j11 r / R)`` at the vertices of a centred disk of radius ``R``."""
    from scipy.special import j0, jn_zeros

    r = np.linalg.norm(mesh.vertices[:, :2], axis=1)
    return j0(jn_zeros(1, 1)[0] * r / r.max())


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------
def _atomic_write_bytes(path, data):
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def _fmt(a):
    return "\n".join(" ".join(repr(float(x)) for x in row) for row in np.atleast_2d(a))


def write_vtk(mesh, path, psi=None, omega=None, p_star=None, velocity=None, title="surfflow"):
    """Legacy ASCII VTK unstructured grid of triangles (cell type 5).

    ``psi``, ``omega`` and a vertex average of the CR field ``p_star`` are
    written as point scalars, ``velocity`` as cell vectors.
    """
    nv, nt = mesh.n_vertices, mesh.n_triangles
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID", f"POINTS {nv} double"]
    lines.append(_fmt(mesh.vertices))
    lines.append(f"CELLS {nt} {4 * nt}")
    lines.append("\n".join(f"3 {a} {b} {c}" for a, b, c in mesh.triangles))
    lines.append(f"CELL_TYPES {nt}")
    lines.append("\n".join(["5"] * nt))
    point = []
    for name, val in (("psi", psi), ("omega", omega)):
        if val is not None:
            point.append((name, np.asarray(val, dtype=float)))
    if p_star is not None:
        point.append(("pressure", fem.cr_to_p1(mesh, p_star)))
    if point:
        lines.append(f"POINT_DATA {nv}")
        for name, val in point:
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default", "\n".join(repr(float(x)) for x in val)]
    if velocity is not None:
        lines += [f"CELL_DATA {nt}", "VECTORS velocity double", _fmt(np.reshape(velocity, (-1, 3)))]
    _atomic_write_bytes(path, ("\n".join(lines) + "\n").encode())


def read_vtk_points(path):
    """Points of a legacy ASCII VTK file (for round-trip checks)."""
    with open(path) as fh:
        tokens = fh.read().split("\n")
    for i, line in enumerate(tokens):
        if line.startswith("POINTS"):
            n = int(line.split()[1])
            return np.array([[float(x) for x in tokens[i + 1 + k].split()] for k in range(n)])
    raise ValueError("no POINTS section")


def write_state(path, state, basis=None):
    """Snapshot of a flow state as ``.npz``."""
    data = {"psi": state.psi, "h_coeffs": state.h_coeffs, "omega": state.omega, "time": np.array(state.time)}
    if basis is not None:
        data["basis"] = basis.fields
    path = Path(path)
    tmp = path.with_name(f".{path.stem}.tmp.npz")
    np.savez(tmp, **data)
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------
@dataclass
class RunResult:
    state: object
    solver: object
    series: list
    forces: object
    out_dir: Path


def run(cfg, out_dir=".", seed=None):
    """Execute a run; writes the diagnostics CSV and optional VTK/npz/force files."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    seed = cfg.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    mesh = build_mesh(cfg)
    logger.info("mesh: %d vertices, %d triangles, genus %d, %d boundary loops",
                mesh.n_vertices, mesh.n_triangles, mesh.genus, len(mesh.boundary_loops))
    bc = build_boundary(cfg, mesh)
    spaces = bc.spaces if bc is not None else None
    basis = hodge.harmonic_basis(mesh, seed=seed, spaces=spaces)
    logger.info("harmonic space dimension %d", basis.dim)
    sim = build_sim_config(cfg, mesh)
    solver = FlowSolver(mesh, basis, sim, bc)
    state = initial_state(cfg, solver, rng)

    obstacle = None
    if bc is not None and bc.obstacle_loop is not None:
        obstacle = bench.obstacle_edges(mesh, bc)
    forces = bench.ForceSeries() if obstacle is not None else None
    series = []
    w = mesh.vertex_weights
    out = cfg.output
    azimuthal = cfg.force.get("kind") == "azimuthal"

    def record(k, st):
        row = [st.time, solver.kinetic_energy(st), float(w @ st.omega) / w.sum()]
        need_p = obstacle is not None or (out.vtk_stride and k % out.vtk_stride == 0)
        p = solver.pressure(st) if need_p else None
        if obstacle is not None:
            cd, cl = bench.coefficients(*bench.obstacle_force(mesh, obstacle, p, st.omega, sim.nu))
            row += [cd, cl]
            if k > 0:
                forces.append(st.time, cd, cl)
        if azimuthal:
            row.append(bench.mean_azimuthal_speed(mesh, solver.velocity(st)))
        series.append(row)
        if out.vtk_stride and k % out.vtk_stride == 0:
            write_vtk(mesh, out_dir / f"state_{k:06d}.vtk", st.psi, st.omega, p, solver.velocity(st))
        if out.snapshot_stride and k % out.snapshot_stride == 0:
            write_state(out_dir / f"state_{k:06d}.npz", st)
        if k % out.log_stride == 0:
            logger.info("step %d t=%.4f E=%.6e", k, st.time, row[1])

    record(0, state)
    state = solver.run(state, callback=record)

    header = ["t", "kinetic_energy", "mean_omega"] + (["cd", "cl"] if obstacle is not None else [])
    header += ["mean_azimuthal_speed"] if azimuthal else []
    text = ",".join(header) + "\n" + "\n".join(",".join(repr(float(x)) for x in r) for r in series) + "\n"
    bench.atomic_write_text(out_dir / out.csv, text)
    if forces is not None and len(forces):
        forces.to_csv(out_dir / out.force_csv)
    return RunResult(state, solver, series, forces, out_dir)


__all__ = [
    "ConfigError",
    "MeshError",
    "OutputSpec",
    "RunConfig",
    "RunResult",
    "build_boundary",
    "build_mesh",
    "build_sim_config",
    "load_shipped_config",
    "parse_config",
    "parse_config_text",
    "read_vtk_points",
    "run",
    "shipped_config",
    "validate_config",
    "write_state",
    "write_vtk",
]
