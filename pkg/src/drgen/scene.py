"""Scene graph: part instances, backplate, region of interest, validation.

A scene is immutable once constructed.  Validation enforces the rules
that downstream stages rely on: labeled parts exist and carry unique
positive instance ids, the region of interest encloses every labeled
part, the camera does not sit inside any closed mesh volume, and the
backplate stays clear of the labeled parts.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .camera import PinholeCamera
from .errors import SceneError
from .geometry import Aabb, Transform, triangle_intersects_box
from .materials import MaterialSpec
from .meshio import Mesh, load_mesh, save_mesh
from .render.envlight import EnvironmentLight


@dataclass(frozen=True)
class PartInstance:
    """A placed mesh.  ``class_label`` marks inspection-relevant parts
    that receive detection labels; context geometry leaves it None.

    ``material`` is the part's fixed appearance; per-frame appearance
    sampling may override it on the rendered copy of the scene.
    """

    mesh: Mesh
    transform: Transform
    instance_id: int
    class_label: str | None = None
    material: MaterialSpec | None = None
    name: str = ""

    def __post_init__(self):
        if int(self.instance_id) <= 0:
            raise SceneError(f"instance_id must be positive, got {self.instance_id}")
        object.__setattr__(self, "instance_id", int(self.instance_id))

    @property
    def labeled(self) -> bool:
        return self.class_label is not None

    def world_vertices(self) -> np.ndarray:
        return self.transform.apply_points(self.mesh.vertices)

    def world_aabb(self) -> Aabb:
        return Aabb.from_points(self.world_vertices())


@dataclass(frozen=True)
class Backplate:
    """Camera-facing textured quad behind the scene.

    ``corners`` are four world-space points in the order top-left,
    top-right, bottom-right, bottom-left as seen from the camera; the
    image maps onto them with (0,0) at the first corner.  The image is
    8-bit sRGB; the renderer treats it as an emitter after linearizing.
    """

    corners: np.ndarray            # (4, 3) float64
    image: np.ndarray              # (H, W, 3) uint8 sRGB
    image_path: str | None = None  # provenance for serialization

    def __post_init__(self):
        c = np.ascontiguousarray(np.asarray(self.corners, dtype=np.float64))
        if c.shape != (4, 3) or not np.all(np.isfinite(c)):
            raise SceneError(f"backplate needs 4 finite corners, got shape {c.shape}")
        img = np.ascontiguousarray(np.asarray(self.image))
        if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
            raise SceneError("backplate image must be (H, W, 3) uint8")
        c.flags.writeable = False
        img.flags.writeable = False
        object.__setattr__(self, "corners", c)
        object.__setattr__(self, "image", img)

    def triangles(self) -> np.ndarray:
        """Two world-space triangles (2, 3, 3) covering the quad."""
        c = self.corners
        return np.array([[c[0], c[1], c[2]], [c[0], c[2], c[3]]])


@dataclass(frozen=True)
class RegionOfInterest:
    """World-space box that must enclose all labeled parts and stay
    visible from the camera."""

    box: Aabb

    def to_json(self) -> dict:
        return self.box.to_json()

    @staticmethod
    def from_json(data: dict) -> "RegionOfInterest":
        return RegionOfInterest(Aabb.from_json(data))


def _camera_inside_closed_mesh(part: PartInstance, cam_pos: np.ndarray) -> bool:
    """Parity test: cast +x ray in object space, count crossings."""
    inv_p = part.transform.inverse_points(cam_pos[None, :])[0]
    lo = part.mesh.vertices.min(axis=0)
    hi = part.mesh.vertices.max(axis=0)
    if np.any(inv_p < lo) or np.any(inv_p > hi):
        return False
    if not part.mesh.is_closed():
        return False
    v = part.mesh.vertices
    t = part.mesh.triangles
    a, b, c = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
    d = np.array([1.0, 0.0, 0.0])
    e1 = b - a
    e2 = c - a
    p = np.cross(d, e2)
    det = np.einsum("ij,ij->i", e1, p)
    ok = np.abs(det) > 1e-12
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    s = inv_p - a
    u = np.einsum("ij,ij->i", s, p) * inv
    q = np.cross(s, e1)
    w = q[:, 0] * inv        # d . q with d = +x
    tt = np.einsum("ij,ij->i", e2, q) * inv
    hit = ok & (u >= 0) & (u <= 1) & (w >= 0) & (u + w <= 1) & (tt > 1e-9)
    return bool(np.count_nonzero(hit) % 2 == 1)


@dataclass(frozen=True)
class SceneGraph:
    """Immutable scene: parts, camera, environment, backplate, ROI."""

    parts: tuple[PartInstance, ...]
    camera: PinholeCamera
    environment: EnvironmentLight
    roi: RegionOfInterest
    backplate: Backplate | None = None
    environment_path: str | None = None

    def __post_init__(self):
        parts = tuple(self.parts)
        object.__setattr__(self, "parts", parts)
        labeled = [p for p in parts if p.labeled]
        if not labeled:
            raise SceneError("scene needs at least one labeled part")
        ids = [p.instance_id for p in parts]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise SceneError(f"duplicate instance ids: {dupes}")
        roi_box = self.roi.box
        for p in labeled:
            bb = p.world_aabb()
            if not roi_box.contains_box(bb, eps=1e-6):
                raise SceneError(
                    f"labeled part {p.instance_id} ({p.class_label}) extends "
                    f"outside the region of interest")
        cam_pos = self.camera.pose.translation
        for p in parts:
            if _camera_inside_closed_mesh(p, cam_pos):
                raise SceneError(
                    f"camera is inside the closed mesh of part {p.instance_id}")
        if self.backplate is not None:
            for p in labeled:
                bb = p.world_aabb()
                for tri in self.backplate.triangles():
                    if triangle_intersects_box(tri[0], tri[1], tri[2], bb):
                        raise SceneError(
                            f"backplate intersects the bounding box of "
                            f"labeled part {p.instance_id}")

    @property
    def labeled_parts(self) -> tuple[PartInstance, ...]:
        return tuple(p for p in self.parts if p.labeled)

    def part_by_id(self, instance_id: int) -> PartInstance:
        for p in self.parts:
            if p.instance_id == instance_id:
                return p
        raise KeyError(instance_id)

    def with_parts(self, parts) -> "SceneGraph":
        return replace(self, parts=tuple(parts))


# ---------------------------------------------------------------------------
# scene file round-trip


def save_scene(scene: SceneGraph, path: str | Path,
               asset_dir: str = "assets") -> None:
    """Write the scene description plus its mesh/image assets.

    Meshes are deduplicated by object identity and written next to the
    scene file under ``asset_dir``, as are the environment map and the
    backplate image when they do not already reference a file on disk.
    All stored paths are relative to the scene file.
    """
    from .render.hdr import write_hdr

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    assets = path.parent / asset_dir
    assets.mkdir(parents=True, exist_ok=True)

    mesh_names: dict[int, str] = {}
    for p in scene.parts:
        key = id(p.mesh)
        if key not in mesh_names:
            name = f"mesh_{len(mesh_names):03d}.obj"
            save_mesh(p.mesh, assets / name)
            mesh_names[key] = f"{asset_dir}/{name}"

    env = scene.environment
    env_rel = scene.environment_path
    if env_rel is None:
        env_rel = f"{asset_dir}/environment.hdr"
        write_hdr(path.parent / env_rel, env.radiance)

    bp_json = None
    if scene.backplate is not None:
        bp = scene.backplate
        img_rel = bp.image_path
        if img_rel is None:
            from PIL import Image
            img_rel = f"{asset_dir}/backplate.png"
            Image.fromarray(bp.image, "RGB").save(path.parent / img_rel)
        bp_json = {"corners": bp.corners.tolist(), "image": img_rel}

    doc = {
        "parts": [
            {
                "mesh": mesh_names[id(p.mesh)],
                "transform": p.transform.to_json(),
                "instance_id": p.instance_id,
                "class_label": p.class_label,
                "material": None if p.material is None else p.material.to_json(),
                "name": p.name,
            }
            for p in scene.parts
        ],
        "camera": scene.camera.to_json(),
        "environment": {
            "map": env_rel,
            "rotation": env.rotation,
            "intensity_scale": env.intensity_scale,
            "color_tint": list(env.color_tint),
        },
        "backplate": bp_json,
        "roi": scene.roi.to_json(),
    }
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def load_scene(path: str | Path) -> SceneGraph:
    """Read a scene description; asset paths resolve against its folder."""
    from .render.hdr import read_hdr

    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise SceneError(f"cannot read scene file {path}: {exc}") from exc
    base = path.parent

    mesh_cache: dict[str, Mesh] = {}

    def mesh_for(rel: str) -> Mesh:
        if rel not in mesh_cache:
            mesh_cache[rel] = load_mesh(base / rel)
        return mesh_cache[rel]

    try:
        parts = tuple(
            PartInstance(
                mesh=mesh_for(p["mesh"]),
                transform=Transform.from_json(p["transform"]),
                instance_id=p["instance_id"],
                class_label=p.get("class_label"),
                material=(None if p.get("material") is None
                          else MaterialSpec.from_json(p["material"])),
                name=p.get("name", ""),
            )
            for p in doc["parts"]
        )
        env_doc = doc["environment"]
        env = EnvironmentLight(
            radiance=read_hdr(base / env_doc["map"]),
            rotation=env_doc.get("rotation", 0.0),
            intensity_scale=env_doc.get("intensity_scale", 1.0),
            color_tint=tuple(env_doc.get("color_tint", (1.0, 1.0, 1.0))),
        )
        backplate = None
        if doc.get("backplate") is not None:
            from PIL import Image
            bp_doc = doc["backplate"]
            img = np.asarray(
                Image.open(base / bp_doc["image"]).convert("RGB"))
            backplate = Backplate(
                corners=np.array(bp_doc["corners"], dtype=np.float64),
                image=img, image_path=bp_doc["image"])
        return SceneGraph(
            parts=parts,
            camera=PinholeCamera.from_json(doc["camera"]),
            environment=env,
            roi=RegionOfInterest.from_json(doc["roi"]),
            backplate=backplate,
            environment_path=env_doc["map"],
        )
    except KeyError as exc:
        raise SceneError(f"scene file {path} is missing field {exc}") from exc
