"""Pinhole camera model and frustum visibility checks.

Camera space is right-handed with +x right, +y up, and the view
direction along -z.  Continuous pixel coordinates put (0, 0) at the
top-left image corner; the center of pixel (i, j) is (i + 0.5, j + 0.5).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import SceneError
from .geometry import Aabb, Transform


@dataclass(frozen=True)
class PinholeCamera:
    pose: Transform            # camera-to-world
    vertical_fov: float        # radians, in (0, pi)
    resolution: tuple[int, int]  # (width, height) pixels

    def __post_init__(self):
        w, h = self.resolution
        if w < 16 or h < 16:
            raise SceneError(f"resolution must be at least 16x16, got {w}x{h}")
        if not (math.isfinite(self.vertical_fov) and 0.0 < self.vertical_fov < math.pi):
            raise SceneError(f"vertical fov out of range: {self.vertical_fov}")
        if self.pose.scale != 1.0:
            raise SceneError("camera pose must not carry scale")
        object.__setattr__(self, "resolution", (int(w), int(h)))
        object.__setattr__(self, "vertical_fov", float(self.vertical_fov))

    @property
    def width(self) -> int:
        return self.resolution[0]

    @property
    def height(self) -> int:
        return self.resolution[1]

    @property
    def focal_pixels(self) -> float:
        """Focal length expressed in pixels, set by the vertical fov."""
        return (self.height / 2.0) / math.tan(self.vertical_fov / 2.0)

    def to_json(self) -> dict:
        return {
            "pose": self.pose.to_json(),
            "vertical_fov": self.vertical_fov,
            "resolution": [self.width, self.height],
        }

    @classmethod
    def from_json(cls, d: dict) -> "PinholeCamera":
        pose = Transform.from_json(d["pose"])
        if "vertical_fov" in d:
            fov = float(d["vertical_fov"])
        elif "vertical_fov_deg" in d:
            fov = math.radians(float(d["vertical_fov_deg"]))
        else:
            raise SceneError("camera needs vertical_fov or vertical_fov_deg")
        return cls(pose, fov, tuple(d["resolution"]))


def project_point(camera: PinholeCamera, p) -> tuple[float, float] | None:
    """World point to continuous pixel coordinates; None when at or behind
    the camera plane."""
    p = np.asarray(p, dtype=np.float64)
    local = (p - camera.pose.translation) @ camera.pose.rotation
    depth = -local[2]
    if depth <= 0.0:
        return None
    f = camera.focal_pixels
    u = camera.width / 2.0 + f * local[0] / depth
    v = camera.height / 2.0 - f * local[1] / depth
    return (u, v)


def ray_through_pixel(camera: PinholeCamera, u: float, v: float) -> tuple[np.ndarray, np.ndarray]:
    """Origin and unit direction of the ray through continuous pixel (u, v)."""
    f = camera.focal_pixels
    d_local = np.array([
        (u - camera.width / 2.0) / f,
        (camera.height / 2.0 - v) / f,
        -1.0,
    ])
    d_world = camera.pose.rotation @ d_local
    d_world /= np.linalg.norm(d_world)
    return camera.pose.translation.copy(), d_world


def roi_fully_visible(camera: PinholeCamera, roi: Aabb) -> bool:
    """All eight box corners project inside the image at positive depth.

    This is a frustum-containment test; occlusion by scene geometry is
    deliberately not considered.
    """
    for corner in roi.corners():
        uv = project_point(camera, corner)
        if uv is None:
            return False
        u, v = uv
        if not (0.0 <= u <= camera.width and 0.0 <= v <= camera.height):
            return False
    return True
