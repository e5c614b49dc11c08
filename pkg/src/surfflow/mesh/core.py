"""Oriented triangulated surfaces embedded in 3-space."""

from __future__ import annotations

import logging
from functools import cached_property

import numpy as np

from ..errors import MeshError

logger = logging.getLogger(__name__)

# local vertex k of a triangle is opposite the edge (k+1, k+2)
_OPPOSITE = np.array([[1, 2], [2, 0], [0, 1]])


def _readonly(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


class SurfaceMesh:
    """Indexed, consistently oriented triangle mesh.

    Parameters
    ----------
    vertices : array_like, shape (n_vertices, 3) or (n_vertices, 2)
        Vertex positions. Planar input is padded with ``z = 0``.
    triangles : array_like, shape (n_triangles, 3)
        Vertex indices, counter-clockwise with respect to the element normal.

    Attributes
    ----------
    edges : ndarray, shape (n_edges, 2)
        Sorted vertex pairs ``(i, j)`` with ``i < j``.
    edge_triangles : ndarray, shape (n_edges, 2)
        Adjacent triangles, ``-1`` in the second slot for boundary edges.
    tri_edges : ndarray, shape (n_triangles, 3)
        Edge opposite each local vertex.
    elem_normal, elem_area, hat_gradients
        Per-element geometry; ``hat_gradients[t, k]`` is the in-plane
        gradient of the P1 hat function of local vertex ``k``.

    Raises
    ------
    MeshError
        On out-of-range indices, degenerate triangles, non-manifold edges or
        vertices, or inconsistent orientation.
    """

    def __init__(self, vertices, triangles):
        v = np.asarray(vertices, dtype=float)
        t = np.asarray(triangles, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] not in (2, 3):
            raise MeshError(f"vertices must have shape (n, 3), got {v.shape}")
        if v.shape[1] == 2:
            v = np.column_stack([v, np.zeros(len(v))])
        if t.ndim != 2 or t.shape[1] != 3 or len(t) == 0:
            raise MeshError(f"triangles must have shape (m, 3) with m > 0, got {t.shape}")
        if t.min() < 0 or t.max() >= len(v):
            raise MeshError("triangle vertex index out of range")
        if not np.all(np.isfinite(v)):
            raise MeshError("non-finite vertex coordinates")
        self.vertices = _readonly(v)
        self.triangles = _readonly(t)
        self._build_geometry()
        self._build_edges()
        self._build_boundary()

    # ------------------------------------------------------------------ build
    def _build_geometry(self):
        p = self.vertices[self.triangles]
        cross = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
        dbl = np.linalg.norm(cross, axis=1)
        scale = np.max(np.ptp(self.vertices, axis=0)) or 1.0
        bad = np.flatnonzero(dbl <= 1e-14 * scale * scale)
        if bad.size:
            raise MeshError(f"degenerate (zero-area) triangle(s): {bad[:10].tolist()}")
        normal = cross / dbl[:, None]
        # opposite edge vectors, oriented counter-clockwise
        e = p[:, _OPPOSITE[:, 1]] - p[:, _OPPOSITE[:, 0]]
        grads = np.cross(normal[:, None, :], e) / dbl[:, None, None]
        self.elem_area = _readonly(0.5 * dbl)
        self.elem_normal = _readonly(normal)
        self.hat_gradients = _readonly(grads)

    def _build_edges(self):
        t = self.triangles
        nt = len(t)
        he = t[:, _OPPOSITE].reshape(-1, 2)  # half-edge k of triangle i at 3*i+k
        key = np.sort(he, axis=1)
        edges, inverse, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
        inverse = inverse.reshape(-1)
        if np.any(counts > 2):
            bad = edges[counts > 2][:5].tolist()
            raise MeshError(f"non-manifold edge(s) shared by more than 2 triangles: {bad}")
        # each directed half-edge may occur once; a repeat means two
        # neighbours traverse their shared edge in the same direction
        _, dcounts = np.unique(he, axis=0, return_counts=True)
        if np.any(dcounts > 1):
            raise MeshError("inconsistent triangle orientation across a shared edge")
        order = np.argsort(inverse, kind="stable")
        tri_of = order // 3
        et = np.full((len(edges), 2), -1, dtype=np.int64)
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        et[:, 0] = tri_of[starts]
        two = counts == 2
        et[two, 1] = tri_of[starts[two] + 1]
        self.edges = _readonly(edges)
        self.edge_triangles = _readonly(et)
        self.tri_edges = _readonly(inverse.reshape(nt, 3))
        self._half_edges = he

    def _build_boundary(self):
        bmask = self.edge_triangles[:, 1] < 0
        self.boundary_edge_mask = _readonly(bmask)
        he = self._half_edges
        is_b = bmask[self.tri_edges.reshape(-1)]
        bhe = he[is_b]
        bedge = self.tri_edges.reshape(-1)[is_b]
        nxt = {}
        for k, (a, b) in enumerate(bhe):
            if a in nxt:
                raise MeshError(f"non-manifold boundary vertex {a}")
            nxt[int(a)] = (int(b), int(bedge[k]))
        loops, loop_edges = [], []
        seen = set()
        for start in sorted(nxt):
            if start in seen:
                continue
            verts, eids = [], []
            a = start
            while a not in seen:
                seen.add(a)
                verts.append(a)
                b, e = nxt[a]
                eids.append(e)
                a = b
            if a != start:
                raise MeshError("boundary edges do not form closed loops")
            loops.append(np.array(verts, dtype=np.int64))
            loop_edges.append(np.array(eids, dtype=np.int64))
        lengths = [float(self.edge_lengths[e].sum()) for e in loop_edges]
        order = sorted(range(len(loops)), key=lambda i: (-round(lengths[i], 12), loops[i][0]))
        self.boundary_loops = [_readonly(loops[i]) for i in order]
        self.boundary_loop_edges = [_readonly(loop_edges[i]) for i in order]
        bv = np.zeros(self.n_vertices, dtype=bool)
        bv[self.edges[bmask].reshape(-1)] = True
        self.boundary_vertex_mask = _readonly(bv)

    # ------------------------------------------------------------ properties
    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def is_closed(self):
        return not self.boundary_loops

    @property
    def euler_characteristic(self):
        return self.n_vertices - self.n_edges + self.n_triangles

    @cached_property
    def n_components(self):
        from scipy.sparse import coo_matrix
        from scipy.sparse.csgraph import connected_components

        e = self.edges
        n = self.n_vertices
        adj = coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
        return connected_components(adj, directed=False)[0]

    @property
    def genus(self):
        """Genus of a connected mesh from ``chi = 2 - 2g - b``."""
        return (2 * self.n_components - len(self.boundary_loops) - self.euler_characteristic) // 2

    @cached_property
    def edge_lengths(self):
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return _readonly(np.linalg.norm(d, axis=1))

    @cached_property
    def edge_midpoints(self):
        return _readonly(0.5 * (self.vertices[self.edges[:, 0]] + self.vertices[self.edges[:, 1]]))

    @cached_property
    def centroids(self):
        return _readonly(self.vertices[self.triangles].mean(axis=1))

    @cached_property
    def vertex_weights(self):
        """Integral of each P1 hat function (one third of incident area)."""
        w = np.zeros(self.n_vertices)
        np.add.at(w, self.triangles, np.repeat(self.elem_area[:, None] / 3.0, 3, axis=1))
        return _readonly(w)

    @cached_property
    def edge_weights(self):
        """Integral of each Crouzeix-Raviart basis function."""
        w = np.zeros(self.n_edges)
        np.add.at(w, self.tri_edges, np.repeat(self.elem_area[:, None] / 3.0, 3, axis=1))
        return _readonly(w)

    @cached_property
    def elem_diameter(self):
        return _readonly(self.edge_lengths[self.tri_edges].max(axis=1))

    @property
    def h_min(self):
        return float(self.edge_lengths.min())

    @property
    def h_max(self):
        return float(self.edge_lengths.max())

    @property
    def total_area(self):
        return float(self.elem_area.sum())

    @cached_property
    def corner_angles(self):
        """Interior angle at each triangle corner, shape (n_triangles, 3)."""
        p = self.vertices[self.triangles]
        a = p[:, [1, 2, 0]] - p
        b = p[:, [2, 0, 1]] - p
        cos = np.einsum("tki,tki->tk", a, b)
        sin = np.linalg.norm(np.cross(a, b), axis=2)
        return _readonly(np.arctan2(sin, cos))

    def angle_defects(self):
        """``2*pi`` (interior) or ``pi`` (boundary) minus the incident angle sum."""
        s = np.zeros(self.n_vertices)
        np.add.at(s, self.triangles, self.corner_angles)
        full = np.where(self.boundary_vertex_mask, np.pi, 2.0 * np.pi)
        return full - s

    def boundary_edge_normals(self, edge_ids):
        """Outward unit conormals and unit tangents of boundary edges.

        The tangent follows the induced boundary orientation (surface on the
        left); the conormal lies in the adjacent element's plane.
        """
        edge_ids = np.asarray(edge_ids, dtype=np.int64)
        tri = self.edge_triangles[edge_ids, 0]
        loc = np.argmax(self.tri_edges[tri] == edge_ids[:, None], axis=1)
        a = self.triangles[tri, _OPPOSITE[loc, 0]]
        b = self.triangles[tri, _OPPOSITE[loc, 1]]
        t = self.vertices[b] - self.vertices[a]
        t /= np.linalg.norm(t, axis=1)[:, None]
        n = np.cross(t, self.elem_normal[tri])
        return n, t, tri

    def __repr__(self):
        return (
            f"SurfaceMesh(|V|={self.n_vertices}, |E|={self.n_edges}, |T|={self.n_triangles}, "
            f"loops={len(self.boundary_loops)}, chi={self.euler_characteristic})"
        )


def gaussian_curvature_p1(mesh):
    """Discrete Gaussian curvature at vertices.

    Angle defect divided by one third of the incident triangle area. Boundary
    vertices measure the defect against ``pi`` so flat meshes give zero
    everywhere.
    """
    return mesh.angle_defects() / mesh.vertex_weights


def boundary_loops(mesh):
    """Boundary cycles with the surface on their left, longest first."""
    return [np.array(loop) for loop in mesh.boundary_loops]


def orient_components(vertices, triangles):
    """Flip whole closed components so their signed volume is positive.

    Only global per-component flips are performed; the mesh must already be
    consistently oriented within each component.
    """
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components

    v = np.asarray(vertices, dtype=float)
    t = np.array(triangles, dtype=np.int64)
    if v.shape[1] == 2:
        return t
    nt = len(t)
    he = t[:, _OPPOSITE].reshape(-1, 2)
    key = np.sort(he, axis=1)
    _, inverse = np.unique(key, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    tri = np.arange(3 * nt) // 3
    # link triangles sharing an edge
    order = np.argsort(inverse, kind="stable")
    inv_sorted = inverse[order]
    same = inv_sorted[1:] == inv_sorted[:-1]
    a, b = tri[order[:-1][same]], tri[order[1:][same]]
    adj = coo_matrix((np.ones(len(a)), (a, b)), shape=(nt, nt))
    ncomp, label = connected_components(adj, directed=False)
    counts = np.bincount(inverse)
    for c in range(ncomp):
        sel = label == c
        if np.any(counts[inverse.reshape(nt, 3)[sel]] == 1):
            continue  # open component: no canonical outside
        p = v[t[sel]]
        vol = np.einsum("ti,ti->t", p[:, 0], np.cross(p[:, 1], p[:, 2])).sum() / 6.0
        if vol < 0:
            logger.info("flipping orientation of closed component %d", c)
            t[np.ix_(sel, [1, 2])] = t[np.ix_(sel, [2, 1])]
    return t
