"""OFF / OBJ triangle mesh reading and writing."""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from ..errors import MeshError
from .core import SurfaceMesh, orient_components


def _tokens(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if line:
                yield lineno, line.split()


def read_off(path):
    it = _tokens(path)
    try:
        lineno, tok = next(it)
    except StopIteration:
        raise MeshError(f"{path}: empty file") from None
    if tok[0].upper() != "OFF":
        raise MeshError(f"{path}:{lineno}: missing OFF header")
    rest = tok[1:]
    if not rest:
        lineno, rest = next(it, (lineno, []))
    try:
        nv, nf = int(rest[0]), int(rest[1])
    except (IndexError, ValueError):
        raise MeshError(f"{path}:{lineno}: malformed count line") from None
    verts, faces = [], []
    try:
        for _ in range(nv):
            lineno, tok = next(it)
            verts.append([float(x) for x in tok[:3]])
        for _ in range(nf):
            lineno, tok = next(it)
            n = int(tok[0])
            if n != 3:
                raise MeshError(f"{path}:{lineno}: only triangular faces are supported (got {n})")
            faces.append([int(x) for x in tok[1:4]])
    except StopIteration:
        raise MeshError(f"{path}: unexpected end of file") from None
    except ValueError as exc:
        raise MeshError(f"{path}:{lineno}: {exc}") from None
    return np.array(verts, dtype=float).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3)


def read_obj(path):
    verts, faces = [], []
    for lineno, tok in _tokens(path):
        try:
            if tok[0] == "v":
                verts.append([float(x) for x in tok[1:4]])
            elif tok[0] == "f":
                idx = []
                for item in tok[1:]:
                    k = int(item.split("/")[0])
                    idx.append(k - 1 if k > 0 else len(verts) + k)
                if len(idx) != 3:
                    raise MeshError(f"{path}:{lineno}: only triangular faces are supported")
                faces.append(idx)
        except ValueError as exc:
            raise MeshError(f"{path}:{lineno}: {exc}") from None
    return np.array(verts, dtype=float).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3)


def load_mesh(path, format=None):
    """Read an OFF or OBJ file into a :class:`SurfaceMesh`.

    Closed components with inward-facing orientation are flipped as a whole;
    any other defect raises :class:`MeshError`.
    """
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).lower()
    if not path.exists():
        raise MeshError(f"{path}: no such file")
    if fmt == "off":
        v, t = read_off(path)
    elif fmt == "obj":
        v, t = read_obj(path)
    else:
        raise MeshError(f"unsupported mesh format {fmt!r}")
    if len(t) and (t.min() < 0 or t.max() >= len(v)):
        raise MeshError(f"{path}: face index out of range")
    mesh = SurfaceMesh(v, t)  # validates orientation before any flip
    flipped = orient_components(v, t)
    if not np.array_equal(flipped, t):
        mesh = SurfaceMesh(v, flipped)
    return mesh


def _atomic_write(path, text):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def write_off(mesh, path):
    lines = ["OFF", f"{mesh.n_vertices} {mesh.n_triangles} {mesh.n_edges}"]
    lines += [" ".join(repr(float(x)) for x in p) for p in mesh.vertices]
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    _atomic_write(path, "\n".join(lines) + "\n")


def write_obj(mesh, path):
    lines = ["v " + " ".join(repr(float(x)) for x in p) for p in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles]
    _atomic_write(path, "\n".join(lines) + "\n")


def save_mesh(mesh, path):
    suffix = Path(path).suffix.lower()
    if suffix == ".off":
        write_off(mesh, path)
    elif suffix == ".obj":
        write_obj(mesh, path)
    else:
        raise MeshError(f"unsupported mesh format {suffix!r}")
