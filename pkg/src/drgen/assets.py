"""Built-in demo assets: a small inspection scene, procedural indoor
HDRI and background pools, and a ready-to-run campaign config.

Everything here is deterministic given its seeds, so demo campaigns and
test fixtures reproduce bit-for-bit.
"""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np
from PIL import Image

from .camera import PinholeCamera
from .geometry import Aabb, Transform
from .materials import MaterialSpec
from .meshio import Mesh, save_mesh
from .primitives import make_box, make_cylinder, make_uv_sphere
from .render.envlight import EnvironmentLight
from .render.hdr import write_hdr
from .scene import PartInstance, RegionOfInterest, SceneGraph, save_scene


def merge_meshes(parts) -> Mesh:
    """Concatenate (mesh, offset) pairs into one mesh."""
    verts, tris, norms = [], [], []
    base = 0
    for mesh, offset in parts:
        verts.append(mesh.vertices + np.asarray(offset, dtype=np.float64))
        tris.append(mesh.triangles + base)
        norms.append(mesh.normals)
        base += mesh.num_vertices
    return Mesh(np.concatenate(verts), np.concatenate(tris),
                np.concatenate(norms))


def look_at(eye, target, up=(0.0, 1.0, 0.0)) -> Transform:
    """Camera-to-world pose with the view axis pointing at ``target``."""
    eye = np.asarray(eye, dtype=np.float64)
    z = eye - np.asarray(target, dtype=np.float64)
    z = z / np.linalg.norm(z)
    x = np.cross(np.asarray(up, dtype=np.float64), z)
    x = x / np.linalg.norm(x)
    y = np.cross(z, x)
    return Transform(np.stack([x, y, z], axis=1), eye)


# ---------------------------------------------------------------------------
# part meshes


def make_plate_mesh() -> Mesh:
    """Thin mounting plate, 24 x 1 x 18 cm, resting on y = 0."""
    return merge_meshes([(make_box(0.24, 0.01, 0.18), (0.0, 0.005, 0.0))])


def make_screw_mesh() -> Mesh:
    """Hex-ish screw: wide head on a narrow shaft, base at y = 0."""
    shaft = make_cylinder(radius=0.004, height=0.016, segments=12)
    head = make_cylinder(radius=0.008, height=0.005, segments=6)
    return merge_meshes([(shaft, (0.0, 0.008, 0.0)),
                         (head, (0.0, 0.0185, 0.0))])


def make_washer_mesh() -> Mesh:
    """Flat disc, base at y = 0."""
    disc = make_cylinder(radius=0.012, height=0.003, segments=16)
    return merge_meshes([(disc, (0.0, 0.0015, 0.0))])


def make_inspection_scene(resolution=(320, 240)) -> SceneGraph:
    """Assembly-check scene: a plate carrying two screws and a washer,
    all labeled, with a region of interest enclosing them and a camera
    that keeps the region fully in frame."""
    plate = make_plate_mesh()
    screw = make_screw_mesh()
    washer = make_washer_mesh()
    top = 0.01

    steel = MaterialSpec(base_color=(0.62, 0.62, 0.64), metalness=1.0,
                         roughness=0.35, specular=0.5)
    zinc = MaterialSpec(base_color=(0.72, 0.73, 0.70), metalness=1.0,
                        roughness=0.55, specular=0.5)
    paint = MaterialSpec(base_color=(0.28, 0.34, 0.40), metalness=0.0,
                         roughness=0.7, specular=0.5)

    def at(x, z, ry=0.0):
        c, s = math.cos(ry), math.sin(ry)
        rot = np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
        return Transform(rot, np.array([x, top, z]))

    parts = (
        PartInstance(plate, Transform(), instance_id=1, class_label="plate",
                     material=paint, name="plate"),
        PartInstance(screw, at(-0.06, 0.03, 0.4), instance_id=2,
                     class_label="screw", material=steel, name="screw_a"),
        PartInstance(screw, at(0.07, -0.02, 1.9), instance_id=3,
                     class_label="screw", material=steel, name="screw_b"),
        PartInstance(washer, at(-0.01, -0.055), instance_id=4,
                     class_label="washer", material=zinc, name="washer_a"),
    )
    roi = RegionOfInterest(Aabb(np.array([-0.14, -0.005, -0.11]),
                                np.array([0.14, 0.05, 0.11])))
    camera = PinholeCamera(
        pose=look_at((0.30, 0.36, 0.32), (0.0, 0.01, 0.0)),
        vertical_fov=math.radians(55.0),
        resolution=tuple(resolution))
    ambient = EnvironmentLight(np.full((8, 16, 3), 0.8))
    return SceneGraph(parts=parts, camera=camera, environment=ambient,
                      roi=roi)


# ---------------------------------------------------------------------------
# asset pools


def make_indoor_hdri(index: int, width: int = 64, height: int = 32) -> np.ndarray:
    """Procedural indoor-ish radiance map: graded ambient light plus a
    few bright window patches, varied by ``index``."""
    rng = np.random.default_rng(1700 + index)
    theta = (np.arange(height) + 0.5) / height * math.pi
    vertical = np.cos(theta) * 0.5 + 0.5            # 1 at zenith, 0 at nadir
    ceiling = np.array(rng.uniform(0.6, 1.1, size=3))
    floor = np.array([0.35, 0.30, 0.26]) * rng.uniform(0.6, 1.2)
    img = (vertical[:, None, None] * ceiling[None, None, :]
           + (1.0 - vertical)[:, None, None] * floor[None, None, :])
    img = np.repeat(img, width, axis=1)
    for _ in range(int(rng.integers(1, 4))):
        w = int(rng.integers(4, 10))
        h = int(rng.integers(3, 7))
        x0 = int(rng.integers(0, width))
        y0 = int(rng.integers(2, max(3, height // 2 - h)))
        radiance = rng.uniform(4.0, 18.0) * np.array(
            [1.0, rng.uniform(0.85, 1.0), rng.uniform(0.7, 1.0)])
        xs = (np.arange(x0, x0 + w)) % width
        img[y0:y0 + h, xs, :] = radiance
    return np.ascontiguousarray(img)


def write_hdri_pool(directory: str | Path, count: int = 16,
                    width: int = 64, height: int = 32) -> list[str]:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(count):
        p = out / f"indoor_{i:02d}.hdr"
        write_hdr(p, make_indoor_hdri(i, width, height))
        paths.append(str(p))
    return paths


def write_background_pool(directory: str | Path, count: int = 8,
                          size: int = 64) -> list[str]:
    """Flat photo-like backdrops: two-color gradients with speckle."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(count):
        rng = np.random.default_rng(2300 + i)
        a = rng.uniform(40, 200, size=3)
        b = rng.uniform(40, 200, size=3)
        t = np.linspace(0.0, 1.0, size)[:, None, None]
        img = a[None, None, :] * (1 - t) + b[None, None, :] * t
        img = img + rng.normal(0.0, 12.0, size=(size, size, 3))
        img = np.clip(img, 0, 255).astype(np.uint8)
        p = out / f"backdrop_{i:02d}.png"
        Image.fromarray(img, mode="RGB").save(p, format="PNG")
        paths.append(str(p))
    return paths


def write_distractor_pool(directory: str | Path) -> list[str]:
    """A few clutter meshes for the mesh-pool distractor mode."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    meshes = {
        "block.obj": make_box(1.0, 0.6, 0.8),
        "ball.obj": make_uv_sphere(0.5, rings=8, segments=12),
        "rod.obj": make_cylinder(radius=0.15, height=1.0, segments=10),
        "puck.obj": make_cylinder(radius=0.5, height=0.25, segments=12),
    }
    paths = []
    for name, mesh in sorted(meshes.items()):
        p = out / name
        save_mesh(mesh, p)
        paths.append(str(p))
    return paths


# ---------------------------------------------------------------------------
# demo campaign


def write_demo_campaign(root: str | Path, total_images: int = 20,
                        resolution=(160, 120), samples_per_pixel: int = 8,
                        hdri_count: int = 16, **config_overrides) -> Path:
    """Materialize scene + asset pools + campaign config under ``root``
    and return the config path (ready for the command-line tools)."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    scene = make_inspection_scene(resolution)
    scene_path = root / "scene" / "inspection.json"
    save_scene(scene, scene_path)
    hdris = write_hdri_pool(root / "hdri", count=hdri_count)
    write_background_pool(root / "backdrops")

    config = {
        "scene_path": str(scene_path),
        "randomization": {
            "hdri_pool": hdris,
            "material_strategy": "complex",
            "hdri_rotation": [0.0, 2.0 * math.pi],
            "light_intensity_scale": [0.3, 3.0],
            "light_color_tint": [0.7, 1.3],
            "camera_translation_jitter": 0.02,
            "camera_rotation_jitter": math.radians(3.0),
            "noise_sigma": [0.0, 0.02],
            "background": {"mode": "real_image_pool",
                           "image_dir": str(root / "backdrops")},
            "distractors": {"mode": "primitive", "count_range": [0, 4],
                            "size_range": [0.02, 0.06]},
            "max_visibility_attempts": 100,
        },
        "render": {
            "resolution": list(resolution),
            "samples_per_pixel": samples_per_pixel,
            "max_bounces": 4,
            "russian_roulette_start": 2,
            "seed": 0,
        },
        "label_policy": {"min_visible_pixels": 25,
                         "min_visibility_fraction": 0.25},
        "total_images": total_images,
        "train_fraction": 0.8,
        "master_seed": 7,
        "output_dir": str(root / "out"),
    }
    for key, value in config_overrides.items():
        if isinstance(value, dict) and isinstance(config.get(key), dict):
            config[key].update(value)
        else:
            config[key] = value
    config_path = root / "campaign.json"
    config_path.write_text(json.dumps(config, indent=2, sort_keys=True) + "\n",
                           encoding="utf-8")
    return config_path
