"""Structured and block-structured surface mesh generators."""

from __future__ import annotations

import math

import numpy as np

from ..errors import MeshError
from .core import SurfaceMesh


def _check(cond, msg):
    if not cond:
        raise MeshError(f"invalid generator parameters: {msg}")


def _quad_tris(a, b, c, d, flip):
    """Split CCW quad (a, b, c, d); ``flip`` selects the other diagonal."""
    if flip:
        return [(a, b, d), (b, c, d)]
    return [(a, b, c), (a, c, d)]


def _grid(nx, ny, periodic_x=False, periodic_y=False):
    """Triangles of an (nx x ny)-cell structured grid with alternating diagonals."""
    cols = nx if periodic_x else nx + 1
    rows = ny if periodic_y else ny + 1

    def vid(i, j):
        return (j % rows) * cols + (i % cols)

    tris = []
    for j in range(ny):
        for i in range(nx):
            tris += _quad_tris(vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1), (i + j) % 2)
    return np.array(tris, dtype=np.int64), cols, rows


def rectangle(width=1.0, height=1.0, nx=4, ny=4, origin=(0.0, 0.0)):
    _check(width > 0 and height > 0, "width/height must be positive")
    _check(nx >= 1 and ny >= 1, "subdivisions must be >= 1")
    tris, cols, rows = _grid(nx, ny)
    x, y = np.meshgrid(np.linspace(0, width, cols) + origin[0], np.linspace(0, height, rows) + origin[1])
    v = np.column_stack([x.ravel(), y.ravel(), np.zeros(x.size)])
    return SurfaceMesh(v, tris)


def disk(radius=1.0, n_rings=4, center=(0.0, 0.0)):
    """Disk from concentric rings of ``6k`` points zipped together."""
    _check(radius > 0, "radius must be positive")
    _check(n_rings >= 1, "n_rings must be >= 1")
    pts = [(0.0, 0.0)]
    rings = [[0]]
    for k in range(1, n_rings + 1):
        r = radius * k / n_rings
        n = 6 * k
        ids = []
        for j in range(n):
            a = 2 * math.pi * j / n
            ids.append(len(pts))
            pts.append((r * math.cos(a), r * math.sin(a)))
        rings.append(ids)
    tris = []
    for j in range(6):
        tris.append((0, rings[1][j], rings[1][(j + 1) % 6]))
    for k in range(2, n_rings + 1):
        tris += _zip_rings(rings[k - 1], rings[k])
    v = np.array(pts) + np.asarray(center, dtype=float)
    return SurfaceMesh(np.column_stack([v, np.zeros(len(v))]), np.array(tris))


def _zip_rings(inner, outer):
    m, n = len(inner), len(outer)
    tris = []
    i = j = 0
    while i < m or j < n:
        ai = (i + 1) / m
        aj = (j + 1) / n
        if j < n and (i >= m or aj <= ai):
            tris.append((inner[i % m], outer[j % n], outer[(j + 1) % n]))
            j += 1
        else:
            tris.append((inner[i % m], outer[j % n], inner[(i + 1) % m]))
            i += 1
    return tris


def annulus(inner_radius=0.5, outer_radius=1.0, n_radial=4, n_angular=24, center=(0.0, 0.0)):
    _check(0 < inner_radius < outer_radius, "need 0 < inner_radius < outer_radius")
    _check(n_angular >= 3 and n_radial >= 1, "n_angular >= 3 and n_radial >= 1")
    tris, cols, rows = _grid(n_angular, n_radial, periodic_x=True)
    ang = 2 * np.pi * np.arange(cols) / n_angular
    rad = np.linspace(inner_radius, outer_radius, rows)
    a, r = np.meshgrid(ang, rad)
    v = np.column_stack([r.ravel() * np.cos(a.ravel()) + center[0], r.ravel() * np.sin(a.ravel()) + center[1], np.zeros(a.size)])
    return SurfaceMesh(v, tris)


def torus(n_theta=16, n_phi=8, major_radius=2.0, minor_radius=1.0):
    """Torus symmetric about the y-axis.

    ``x = ((R + r cos phi) cos theta, r sin phi, (R + r cos phi) sin theta)``
    with ``theta`` the toroidal and ``phi`` the poloidal angle.
    """
    _check(n_theta >= 3 and n_phi >= 3, "angular subdivisions must be >= 3")
    _check(0 < minor_radius < major_radius, "need 0 < minor_radius < major_radius")
    tris, cols, rows = _grid(n_theta, n_phi, periodic_x=True, periodic_y=True)
    th, ph = np.meshgrid(2 * np.pi * np.arange(cols) / n_theta, 2 * np.pi * np.arange(rows) / n_phi)
    th, ph = th.ravel(), ph.ravel()
    ring = major_radius + minor_radius * np.cos(ph)
    v = np.column_stack([ring * np.cos(th), minor_radius * np.sin(ph), ring * np.sin(th)])
    mesh = SurfaceMesh(v, tris)
    if _signed_volume(mesh) < 0:
        mesh = SurfaceMesh(v, tris[:, [0, 2, 1]])
    return mesh


def _signed_volume(mesh):
    p = mesh.vertices[mesh.triangles]
    return np.einsum("ti,ti->t", p[:, 0], np.cross(p[:, 1], p[:, 2])).sum() / 6.0


def cylinder_lateral(radius=0.5, height=1.0, n_angular=24, n_axial=8):
    """Lateral surface of a z-aligned cylinder, ``z in [-height/2, height/2]``."""
    _check(radius > 0 and height > 0, "radius/height must be positive")
    _check(n_angular >= 3 and n_axial >= 1, "n_angular >= 3 and n_axial >= 1")
    tris, cols, rows = _grid(n_angular, n_axial, periodic_x=True)
    s, z = np.meshgrid(2 * np.pi * np.arange(cols) / n_angular, np.linspace(-height / 2, height / 2, rows))
    v = np.column_stack([radius * np.cos(s.ravel()), radius * np.sin(s.ravel()), z.ravel()])
    return SurfaceMesh(v, tris)


# ---------------------------------------------------------------------------
# plate with a circular hole: Cartesian blocks around an O-grid
# ---------------------------------------------------------------------------
def _uniform_nodes(a, b, h):
    n = max(1, int(math.ceil((b - a) / h - 1e-9)))
    return np.linspace(a, b, n + 1)


def _graded_nodes(a, b, h0, h1, ratio=1.05):
    """Nodes from ``a`` to ``b``, spacing growing geometrically from h0 to h1."""
    if h1 <= h0 * (1 + 1e-12):
        return _uniform_nodes(a, b, h0)
    sizes = []
    total, s = 0.0, h0
    while total < (b - a) - 1e-12:
        sizes.append(s)
        total += s
        s = min(s * ratio, h1)
    sizes = np.array(sizes) * (b - a) / total
    return a + np.concatenate([[0.0], np.cumsum(sizes)])


def _geometric_fractions(n, first):
    """Cumulative fractions of ``n`` intervals whose first has relative size ``first``."""
    if n == 1:
        return np.array([0.0, 1.0])
    if abs(first * n - 1) < 1e-9:
        return np.linspace(0, 1, n + 1)
    lo, hi = 1e-6, 1e3
    for _ in range(200):  # bisection for the growth ratio q: first*(q^n-1)/(q-1) = 1
        q = 0.5 * (lo + hi)
        s = first * n if abs(q - 1) < 1e-12 else first * (q**n - 1) / (q - 1)
        if s > 1:
            hi = q
        else:
            lo = q
    sizes = first * q ** np.arange(n)
    return np.concatenate([[0.0], np.cumsum(sizes / sizes.sum())])


def plate_with_hole(xs, ys, center, radius, box_half, periodic_x=False, n_layers=None, coarsen=None):
    """Planar triangulation of a rectangle minus a disk.

    ``xs``/``ys`` are node coordinates of the background grid and must contain
    ``center -/+ box_half``. Cells inside that box are replaced by an O-grid
    whose inner ring lies exactly on the circle. With ``periodic_x`` the last
    x-node is identified with the first. ``coarsen`` halves the node count
    of the O-grid through one transition layer next to the box; by default
    this is done when the circle spacing would otherwise fall below 0.6
    times the box spacing and at least 8 O-grid nodes remain.

    Returns ``(points (n, 2), triangles)`` oriented counter-clockwise.
    """
    cx, cy = center
    xs, ys = np.asarray(xs, float), np.asarray(ys, float)

    def locate(arr, val):
        k = int(np.argmin(np.abs(arr - val)))
        if abs(arr[k] - val) > 1e-9 * max(1.0, abs(val)):
            raise MeshError("grid nodes must contain the obstacle box edges")
        return k

    i0, i1 = locate(xs, cx - box_half), locate(xs, cx + box_half)
    j0, j1 = locate(ys, cy - box_half), locate(ys, cy + box_half)
    _check(box_half > radius, "box must enclose the hole")
    _check(0 < i0 and i1 < len(xs) - 1 and 0 < j0 and j1 < len(ys) - 1, "hole box must be strictly interior")
    nx, ny = len(xs) - 1, len(ys) - 1
    cols = nx if periodic_x else nx + 1

    vid = -np.ones((nx + 1, ny + 1), dtype=np.int64)
    pts = []
    for j in range(ny + 1):
        for i in range(cols):
            if i0 < i < i1 and j0 < j < j1:
                continue
            vid[i, j] = len(pts)
            pts.append((xs[i], ys[j]))
    if periodic_x:
        vid[nx, :] = vid[0, :]

    tris = []
    for j in range(ny):
        for i in range(nx):
            if i0 <= i < i1 and j0 <= j < j1:
                continue
            tris += _quad_tris(vid[i, j], vid[i + 1, j], vid[i + 1, j + 1], vid[i, j + 1], (i + j) % 2)

    ring = [(i, j0) for i in range(i0, i1)] + [(i1, j) for j in range(j0, j1)]
    ring += [(i, j1) for i in range(i1, i0, -1)] + [(i0, j) for j in range(j1, j0, -1)]
    outer_ids = [vid[i, j] for i, j in ring]
    bpts = np.array([(xs[i], ys[j]) for i, j in ring])
    npr = len(ring)
    h_box = np.mean(np.linalg.norm(np.diff(np.vstack([bpts, bpts[:1]]), axis=0), axis=1))
    if coarsen is None:
        coarsen = npr >= 16 and 2 * math.pi * radius / npr < 0.6 * h_box
    # O-grid nodes sit on the rays through every (or every other) box node
    step = 2 if coarsen else 1
    obase = bpts[::step]
    ang = np.arctan2(obase[:, 1] - cy, obase[:, 0] - cx)
    cpts = np.column_stack([cx + radius * np.cos(ang), cy + radius * np.sin(ang)])
    nin = len(obase)
    h_circ = 2 * math.pi * radius / nin
    gap = np.mean(np.linalg.norm(obase - cpts, axis=1))
    if n_layers is None:
        n_layers = max(1, int(round(2 * gap / (h_box + h_circ))))
    if coarsen:
        n_layers = max(2, n_layers)
    frac = _geometric_fractions(n_layers, min(0.9, h_circ / gap))
    layers = []
    for k in range(n_layers):
        ids = []
        for p in range(nin):
            ids.append(len(pts))
            pts.append(tuple(cpts[p] + frac[k] * (obase[p] - cpts[p])))
        layers.append(ids)
    n_quad = n_layers - 1 if coarsen else n_layers
    if coarsen:
        inner = layers[-1]
        for p in range(nin):
            q = (p + 1) % nin
            a, m, b = outer_ids[2 * p], outer_ids[2 * p + 1], outer_ids[(2 * p + 2) % npr]
            tris += [(inner[p], a, m), (inner[p], m, inner[q]), (inner[q], m, b)]
    else:
        layers.append(outer_ids)
    for k in range(n_quad):
        for p in range(nin):
            q = (p + 1) % nin
            tris += _quad_tris(layers[k][p], layers[k + 1][p], layers[k + 1][q], layers[k][q], (k + p) % 2)

    pts = np.array(pts)
    tris = np.array(tris, dtype=np.int64)
    a, b, c = pts[tris[:, 0]], pts[tris[:, 1]], pts[tris[:, 2]]
    if periodic_x:
        period = xs[-1] - xs[0]
        for q in (b, c):
            d = q[:, 0] - a[:, 0]
            q[:, 0] -= period * np.round(d / period)
    det = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    if np.any(det <= 0):
        raise MeshError("plate_with_hole produced inverted elements; refine the background grid")
    return pts, tris


def channel_with_hole(
    length=2.2, height=0.41, center=(0.2, 0.2), radius=0.05, h=0.02, h_max=None, ratio=1.05, box_half=None
):
    """Channel ``[0, length] x [0, height]`` minus a disk.

    ``h`` is the target edge length near the obstacle; downstream of the
    obstacle box the x-spacing grows geometrically up to ``h_max``.
    """
    cx, cy = center
    _check(h > 0 and radius > 0, "h and radius must be positive")
    if box_half is None:
        box_half = 1.5 * radius
    _check(box_half < min(cx, cy, length - cx, height - cy), "hole must lie strictly inside the channel")
    h_max = h if h_max is None else max(h, h_max)
    xs = np.concatenate(
        [
            _uniform_nodes(0.0, cx - box_half, h)[:-1],
            _uniform_nodes(cx - box_half, cx + box_half, h)[:-1],
            _graded_nodes(cx + box_half, length, h, h_max, ratio),
        ]
    )
    ys = np.concatenate(
        [
            _uniform_nodes(0.0, cy - box_half, h)[:-1],
            _uniform_nodes(cy - box_half, cy + box_half, h)[:-1],
            _uniform_nodes(cy + box_half, height, h),
        ]
    )
    pts, tris = plate_with_hole(xs, ys, center, radius, box_half)
    return SurfaceMesh(pts, tris)


def cylinder_with_hole(
    radius=0.5, height=1.0, hole_diameter=0.125, hole_z=0.025, hole_angle=-math.pi / 2, h=0.04, box_half=None
):
    """Lateral cylinder surface pierced by a geodesic disk.

    The hole is a disk of diameter ``hole_diameter`` in the unrolled
    (arc length, z) chart, centred at azimuth ``hole_angle`` and height
    ``hole_z``; the default sits slightly above the equator on the negative
    y-axis.
    """
    _check(radius > 0 and height > 0 and hole_diameter > 0 and h > 0, "parameters must be positive")
    r = hole_diameter / 2
    if box_half is None:
        box_half = 1.5 * r
    circ = 2 * math.pi * radius
    sc = radius * (hole_angle % (2 * math.pi))
    zc = hole_z
    _check(box_half < min(sc, circ - sc), "hole too close to the chart seam; pick another hole_angle")
    _check(abs(zc) + box_half < height / 2, "hole must lie strictly inside the cylinder")
    xs = np.concatenate(
        [
            _uniform_nodes(0.0, sc - box_half, h)[:-1],
            _uniform_nodes(sc - box_half, sc + box_half, h)[:-1],
            _uniform_nodes(sc + box_half, circ, h),
        ]
    )
    ys = np.concatenate(
        [
            _uniform_nodes(-height / 2, zc - box_half, h)[:-1],
            _uniform_nodes(zc - box_half, zc + box_half, h)[:-1],
            _uniform_nodes(zc + box_half, height / 2, h),
        ]
    )
    pts, tris = plate_with_hole(xs, ys, (sc, zc), r, box_half, periodic_x=True)
    phi = pts[:, 0] / radius
    v = np.column_stack([radius * np.cos(phi), radius * np.sin(phi), pts[:, 1]])
    return SurfaceMesh(v, tris)


GENERATORS = {
    "rectangle": rectangle,
    "disk": disk,
    "annulus": annulus,
    "torus": torus,
    "cylinder_lateral": cylinder_lateral,
    "cylinder_with_hole": cylinder_with_hole,
    "channel_with_hole": channel_with_hole,
}


def generate_mesh(kind, **params):
    """Build a mesh by generator name; see :data:`GENERATORS`."""
    try:
        gen = GENERATORS[kind]
    except KeyError:
        raise MeshError(f"unknown mesh kind {kind!r}; choose from {sorted(GENERATORS)}") from None
    try:
        return gen(**params)
    except TypeError as exc:
        raise MeshError(f"bad parameters for {kind}: {exc}") from None
