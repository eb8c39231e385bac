"""Triangle meshes and their ASCII interchange format.

The on-disk format is Wavefront-style: ``v x y z`` vertex records,
optional ``vn x y z`` normals, and ``f`` face records with 1-based
indices (``i``, ``i/j``, ``i//k`` and ``i/j/k`` forms are accepted;
texture indices are ignored).  Faces with more than three corners are
fan-triangulated on load.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MeshError


@dataclass(frozen=True)
class Mesh:
    """Indexed triangle mesh with per-vertex unit normals."""

    vertices: np.ndarray   # (N, 3) float64
    triangles: np.ndarray  # (T, 3) int32
    normals: np.ndarray    # (N, 3) float64, unit length

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3))
        t = np.ascontiguousarray(np.asarray(self.triangles, dtype=np.int32).reshape(-1, 3))
        n = np.ascontiguousarray(np.asarray(self.normals, dtype=np.float64).reshape(-1, 3))
        if t.shape[0] < 1:
            raise MeshError("mesh has no triangles")
        if v.shape[0] < 3:
            raise MeshError("mesh has fewer than 3 vertices")
        if n.shape != v.shape:
            raise MeshError("normals shape must match vertices")
        if t.min() < 0 or t.max() >= v.shape[0]:
            raise MeshError(
                f"triangle index {int(t.max())} out of range for {v.shape[0]} vertices")
        lengths = np.linalg.norm(n, axis=1)
        if np.any(np.abs(lengths - 1.0) > 1e-4):
            raise MeshError("normals are not unit length within 1e-4")
        for a in (v, t, n):
            a.flags.writeable = False
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        object.__setattr__(self, "normals", n)

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_triangles(self) -> int:
        return self.triangles.shape[0]

    def is_closed(self) -> bool:
        """True when every undirected edge is shared by exactly two triangles."""
        t = self.triangles
        edges = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        edges = np.sort(edges, axis=1)
        _, counts = np.unique(edges, axis=0, return_counts=True)
        return bool(np.all(counts == 2))


def compute_vertex_normals(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Area-weighted average of incident face normals, normalized per vertex.

    The cross product of two triangle edges has magnitude proportional to
    triangle area, so accumulating raw cross products gives the area
    weighting for free.
    """
    vertices = np.asarray(vertices, dtype=np.float64)
    triangles = np.asarray(triangles, dtype=np.int64)
    v0 = vertices[triangles[:, 0]]
    v1 = vertices[triangles[:, 1]]
    v2 = vertices[triangles[:, 2]]
    face_n = np.cross(v1 - v0, v2 - v0)
    acc = np.zeros_like(vertices)
    for k in range(3):
        np.add.at(acc, triangles[:, k], face_n)
    lengths = np.linalg.norm(acc, axis=1, keepdims=True)
    # isolated or degenerate vertices get an arbitrary fixed normal
    bad = lengths[:, 0] < 1e-20
    acc[bad] = [0.0, 0.0, 1.0]
    lengths[bad] = 1.0
    return acc / lengths


def _parse_floats(parts, count, lineno):
    if len(parts) < count:
        raise MeshError(f"expected {count} numeric fields, got {len(parts)}", line=lineno)
    try:
        return [float(p) for p in parts[:count]]
    except ValueError as exc:
        raise MeshError(f"bad number: {exc}", line=lineno) from None


def load_mesh(path) -> Mesh:
    """Load a mesh file; recompute normals when the file has none."""
    vertices: list[list[float]] = []
    file_normals: list[list[float]] = []
    faces: list[tuple[list[int], list[int]]] = []  # (vertex ids, normal ids) per face

    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag = parts[0]
            if tag == "v":
                vertices.append(_parse_floats(parts[1:], 3, lineno))
            elif tag == "vn":
                file_normals.append(_parse_floats(parts[1:], 3, lineno))
            elif tag == "f":
                if len(parts) < 4:
                    raise MeshError("face needs at least 3 corners", line=lineno)
                vids, nids = [], []
                for corner in parts[1:]:
                    fields = corner.split("/")
                    try:
                        vids.append(int(fields[0]))
                    except ValueError:
                        raise MeshError(f"bad face corner {corner!r}", line=lineno) from None
                    if len(fields) == 3 and fields[2]:
                        try:
                            nids.append(int(fields[2]))
                        except ValueError:
                            raise MeshError(f"bad face corner {corner!r}", line=lineno) from None
                for vid in vids:
                    if vid < 1 or vid > len(vertices):
                        raise MeshError(
                            f"vertex index {vid} out of range for {len(vertices)} vertices",
                            line=lineno)
                for nid in nids:
                    if nid < 1 or nid > len(file_normals):
                        raise MeshError(
                            f"normal index {nid} out of range for {len(file_normals)} normals",
                            line=lineno)
                if nids and len(nids) != len(vids):
                    raise MeshError("face mixes corners with and without normals", line=lineno)
                # fan-triangulate
                for k in range(1, len(vids) - 1):
                    tri_v = [vids[0] - 1, vids[k] - 1, vids[k + 1] - 1]
                    tri_n = [nids[0] - 1, nids[k] - 1, nids[k + 1] - 1] if nids else []
                    faces.append((tri_v, tri_n))
            # unknown tags are ignored, matching common practice

    if not faces:
        raise MeshError("mesh has no triangles")

    v = np.asarray(vertices, dtype=np.float64)
    t = np.asarray([f[0] for f in faces], dtype=np.int32)

    if file_normals and all(f[1] for f in faces):
        fn = np.asarray(file_normals, dtype=np.float64)
        acc = np.zeros_like(v)
        for tri_v, tri_n in faces:
            for vid, nid in zip(tri_v, tri_n):
                acc[vid] += fn[nid]
        lengths = np.linalg.norm(acc, axis=1, keepdims=True)
        bad = lengths[:, 0] < 1e-20
        acc[bad] = [0.0, 0.0, 1.0]
        lengths[bad] = 1.0
        n = acc / lengths
    else:
        n = compute_vertex_normals(v, t)
    return Mesh(v, t, n)


def save_mesh(mesh: Mesh, path) -> None:
    """Write a mesh so that load_mesh reads back identical arrays."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for x, y, z in mesh.vertices:
            fh.write(f"v {float(x)!r} {float(y)!r} {float(z)!r}\n")
        for x, y, z in mesh.normals:
            fh.write(f"vn {float(x)!r} {float(y)!r} {float(z)!r}\n")
        for a, b, c in mesh.triangles + 1:
            fh.write(f"f {a}//{a} {b}//{b} {c}//{c}\n")
