"""Rigid transforms with uniform scale, quaternions, and axis-aligned boxes.

Conventions: right-handed coordinates, meters, rotations as orthonormal
3x3 matrices or unit quaternions in (w, x, y, z) order.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SceneError


def _as_vec3(v) -> np.ndarray:
    a = np.asarray(v, dtype=np.float64).reshape(3)
    a.flags.writeable = False
    return a


def quat_to_matrix(q) -> np.ndarray:
    """Unit quaternion (w, x, y, z) to rotation matrix. Normalizes its input."""
    q = np.asarray(q, dtype=np.float64).reshape(4)
    n = np.linalg.norm(q)
    if n < 1e-12:
        raise SceneError("zero-norm quaternion")
    w, x, y, z = q / n
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def matrix_to_quat(m) -> np.ndarray:
    """Rotation matrix to unit quaternion (w, x, y, z), w >= 0."""
    m = np.asarray(m, dtype=np.float64)
    t = np.trace(m)
    if t > 0:
        s = np.sqrt(t + 1.0) * 2
        q = np.array([0.25 * s, (m[2, 1] - m[1, 2]) / s,
                      (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s])
    else:
        i = int(np.argmax(np.diag(m)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(m[i, i] - m[j, j] - m[k, k] + 1.0) * 2
        q = np.empty(4)
        q[0] = (m[k, j] - m[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (m[j, i] + m[i, j]) / s
        q[1 + k] = (m[k, i] + m[i, k]) / s
    if q[0] < 0:
        q = -q
    return q / np.linalg.norm(q)


def euler_xyz_to_matrix(rx: float, ry: float, rz: float) -> np.ndarray:
    """R = Rz @ Ry @ Rx, angles in radians."""
    cx, sx = np.cos(rx), np.sin(rx)
    cy, sy = np.cos(ry), np.sin(ry)
    cz, sz = np.cos(rz), np.sin(rz)
    rx_m = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    ry_m = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rz_m = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return rz_m @ ry_m @ rx_m


@dataclass(frozen=True)
class Transform:
    """p_world = rotation @ (scale * p_local) + translation."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    scale: float = 1.0

    def __post_init__(self):
        r = np.ascontiguousarray(np.asarray(self.rotation, dtype=np.float64).reshape(3, 3))
        t = _as_vec3(self.translation)
        if not np.allclose(r @ r.T, np.eye(3), atol=1e-6):
            raise SceneError("rotation matrix is not orthonormal")
        if not self.scale > 0:
            raise SceneError(f"scale must be positive, got {self.scale}")
        r.flags.writeable = False
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "scale", float(self.scale))

    @classmethod
    def from_quat(cls, translation, quat_wxyz, scale: float = 1.0) -> "Transform":
        return cls(quat_to_matrix(quat_wxyz), _as_vec3(translation), scale)

    @classmethod
    def identity(cls) -> "Transform":
        return cls()

    def apply_points(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64)
        return (self.scale * pts) @ self.rotation.T + self.translation

    def apply_directions(self, dirs: np.ndarray) -> np.ndarray:
        """Rotation only; uniform scale preserves directions."""
        return np.asarray(dirs, dtype=np.float64) @ self.rotation.T

    def inverse_points(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64)
        return ((pts - self.translation) @ self.rotation) / self.scale

    def compose(self, other: "Transform") -> "Transform":
        """self after other: (self о other)(p) = self(other(p))."""
        return Transform(
            self.rotation @ other.rotation,
            self.apply_points(other.translation),
            self.scale * other.scale,
        )

    def to_json(self) -> dict:
        return {
            "translation": [float(v) for v in self.translation],
            "rotation_wxyz": [float(v) for v in matrix_to_quat(self.rotation)],
            "scale": self.scale,
        }

    @classmethod
    def from_json(cls, d: dict) -> "Transform":
        return cls.from_quat(
            d.get("translation", [0.0, 0.0, 0.0]),
            d.get("rotation_wxyz", [1.0, 0.0, 0.0, 0.0]),
            float(d.get("scale", 1.0)),
        )


@dataclass(frozen=True)
class Aabb:
    """Axis-aligned box, inclusive bounds."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = _as_vec3(self.lo)
        hi = _as_vec3(self.hi)
        if np.any(hi < lo):
            raise SceneError(f"degenerate box: lo={lo.tolist()} hi={hi.tolist()}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def from_points(cls, pts: np.ndarray) -> "Aabb":
        pts = np.asarray(pts, dtype=np.float64).reshape(-1, 3)
        return cls(pts.min(axis=0), pts.max(axis=0))

    def union(self, other: "Aabb") -> "Aabb":
        return Aabb(np.minimum(self.lo, other.lo), np.maximum(self.hi, other.hi))

    def contains_box(self, other: "Aabb", eps: float = 1e-9) -> bool:
        return bool(np.all(self.lo - eps <= other.lo) and np.all(other.hi <= self.hi + eps))

    def contains_point(self, p) -> bool:
        p = np.asarray(p, dtype=np.float64)
        return bool(np.all(self.lo <= p) and np.all(p <= self.hi))

    def intersects(self, other: "Aabb") -> bool:
        return bool(np.all(self.lo <= other.hi) and np.all(other.lo <= self.hi))

    def corners(self) -> np.ndarray:
        lo, hi = self.lo, self.hi
        return np.array([[x, y, z]
                         for x in (lo[0], hi[0])
                         for y in (lo[1], hi[1])
                         for z in (lo[2], hi[2])])

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.hi - self.lo))

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def to_json(self) -> dict:
        return {"min": self.lo.tolist(), "max": self.hi.tolist()}

    @classmethod
    def from_json(cls, d: dict) -> "Aabb":
        return cls(d["min"], d["max"])


def triangle_intersects_box(v0, v1, v2, box: Aabb) -> bool:
    """Exact triangle / AABB overlap (separating axis test)."""
    c = box.center
    h = 0.5 * (box.hi - box.lo)
    p0 = np.asarray(v0, dtype=np.float64) - c
    p1 = np.asarray(v1, dtype=np.float64) - c
    p2 = np.asarray(v2, dtype=np.float64) - c

    # box face normals
    tri_min = np.minimum(np.minimum(p0, p1), p2)
    tri_max = np.maximum(np.maximum(p0, p1), p2)
    if np.any(tri_min > h) or np.any(tri_max < -h):
        return False

    # triangle plane
    e0, e1 = p1 - p0, p2 - p1
    n = np.cross(e0, e1)
    d = abs(np.dot(n, p0))
    r = float(np.dot(h, np.abs(n)))
    if d > r:
        return False

    # nine edge cross products
    e2 = p0 - p2
    for edge in (e0, e1, e2):
        for axis in np.eye(3):
            a = np.cross(edge, axis)
            if np.linalg.norm(a) < 1e-12:
                continue
            proj = np.array([np.dot(a, p0), np.dot(a, p1), np.dot(a, p2)])
            ra = float(np.dot(h, np.abs(a)))
            if proj.min() > ra or proj.max() < -ra:
                return False
    return True
