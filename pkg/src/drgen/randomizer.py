"""Per-frame scenario sampling: materials, lighting, camera, background,
distractors, and sensor-noise level.

``sample_scenario`` is a pure function of (config, scene, frame_seed):
draws follow a fixed, documented order (materials, HDRI choice,
rotation, intensity, tint, camera, background, distractors, noise) from
one PCG64 stream seeded by frame_seed, so any frame can be regenerated
in isolation on any platform.  Camera jitter and distractor placement
use rejection sampling so the configured distributions survive
conditioning on the visibility and clearance constraints.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .camera import PinholeCamera, roi_fully_visible
from .errors import ConfigError, ScenarioError
from .geometry import Aabb, Transform, euler_xyz_to_matrix
from .materials import (MaterialLibrary, MaterialSpec, MaterialStrategy,
                        sample_material, sample_random_color_material)
from .meshio import Mesh, load_mesh
from .primitives import distractor_mesh
from .render.envlight import EnvironmentLight
from .render.hdr import read_hdr
from .scene import Backplate, PartInstance, SceneGraph

_PRIMITIVE_SHAPES = ("cube", "sphere", "cylinder")
_IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")
_MESH_SUFFIXES = (".obj",)

_TWO_PI = 2.0 * math.pi


class BackgroundMode(str, Enum):
    """What sits behind the inspection scene in the rendered images."""

    REAL_IMAGE_POOL = "real_image_pool"   # photos of the actual station
    HDRI_ONLY = "hdri_only"               # no backplate; environment shows
    IMAGE_POOL = "image_pool"             # arbitrary image directory


class DistractorMode(str, Enum):
    NONE = "none"
    PRIMITIVE = "primitive"
    COMPLEX_MESH_POOL = "complex_mesh_pool"


@dataclass(frozen=True)
class BackgroundConfig:
    mode: BackgroundMode = BackgroundMode.HDRI_ONLY
    image_dir: str | None = None

    def __post_init__(self):
        mode = BackgroundMode(self.mode)
        object.__setattr__(self, "mode", mode)
        if mode is not BackgroundMode.HDRI_ONLY and not self.image_dir:
            raise ConfigError(f"background mode {mode.value} needs image_dir")

    def to_json(self) -> dict:
        return {"mode": self.mode.value, "image_dir": self.image_dir}

    @staticmethod
    def from_json(data: dict) -> "BackgroundConfig":
        return BackgroundConfig(mode=BackgroundMode(data["mode"]),
                                image_dir=data.get("image_dir"))


@dataclass(frozen=True)
class DistractorConfig:
    mode: DistractorMode = DistractorMode.NONE
    count_range: tuple[int, int] = (0, 0)
    mesh_dir: str | None = None
    size_range: tuple[float, float] = (0.01, 0.2)   # meters, log-uniform

    def __post_init__(self):
        mode = DistractorMode(self.mode)
        object.__setattr__(self, "mode", mode)
        lo, hi = self.count_range
        if lo < 0 or hi < lo:
            raise ConfigError(f"bad distractor count range {self.count_range}")
        slo, shi = self.size_range
        if slo <= 0 or shi < slo:
            raise ConfigError(f"bad distractor size range {self.size_range}")
        if mode is DistractorMode.COMPLEX_MESH_POOL and not self.mesh_dir:
            raise ConfigError("complex_mesh_pool distractors need mesh_dir")
        object.__setattr__(self, "count_range", (int(lo), int(hi)))
        object.__setattr__(self, "size_range", (float(slo), float(shi)))

    def to_json(self) -> dict:
        return {"mode": self.mode.value,
                "count_range": list(self.count_range),
                "mesh_dir": self.mesh_dir,
                "size_range": list(self.size_range)}

    @staticmethod
    def from_json(data: dict) -> "DistractorConfig":
        return DistractorConfig(
            mode=DistractorMode(data["mode"]),
            count_range=tuple(data.get("count_range", (0, 0))),
            mesh_dir=data.get("mesh_dir"),
            size_range=tuple(data.get("size_range", (0.01, 0.2))))


def _check_range(name, rng, lo_bound=None, hi_bound=None, positive=False):
    lo, hi = float(rng[0]), float(rng[1])
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi < lo:
        raise ConfigError(f"{name} range must be finite with hi >= lo, got {rng}")
    if positive and lo <= 0:
        raise ConfigError(f"{name} range must be positive, got {rng}")
    if lo_bound is not None and lo < lo_bound:
        raise ConfigError(f"{name} range below {lo_bound}: {rng}")
    if hi_bound is not None and hi > hi_bound:
        raise ConfigError(f"{name} range above {hi_bound}: {rng}")
    return (lo, hi)


@dataclass(frozen=True)
class RandomizationConfig:
    """Declarative per-frame randomization policy.

    Distances in meters, angles in radians.  Intensity is drawn
    log-uniformly; everything else uniformly within its range.
    """

    hdri_pool: tuple[str, ...]
    material_strategy: MaterialStrategy = MaterialStrategy.COMPLEX_LIBRARY
    hdri_rotation: tuple[float, float] = (0.0, _TWO_PI)
    light_intensity_scale: tuple[float, float] = (0.3, 3.0)
    light_color_tint: tuple[float, float] = (0.7, 1.3)
    camera_translation_jitter: float = 0.05
    camera_rotation_jitter: float = math.radians(5.0)
    noise_sigma: tuple[float, float] | None = (0.0, 0.04)
    background: BackgroundConfig = field(default_factory=BackgroundConfig)
    distractors: DistractorConfig = field(default_factory=DistractorConfig)
    max_visibility_attempts: int = 100

    def __post_init__(self):
        pool = tuple(str(p) for p in self.hdri_pool)
        if not pool:
            raise ConfigError("hdri_pool must not be empty")
        object.__setattr__(self, "hdri_pool", pool)
        object.__setattr__(self, "material_strategy",
                           MaterialStrategy(self.material_strategy))
        object.__setattr__(self, "hdri_rotation",
                           _check_range("hdri_rotation", self.hdri_rotation))
        object.__setattr__(
            self, "light_intensity_scale",
            _check_range("light_intensity_scale", self.light_intensity_scale,
                         positive=True))
        object.__setattr__(
            self, "light_color_tint",
            _check_range("light_color_tint", self.light_color_tint,
                         lo_bound=0.0))
        if self.camera_translation_jitter < 0 or self.camera_rotation_jitter < 0:
            raise ConfigError("camera jitter bounds must be >= 0")
        if self.noise_sigma is not None:
            object.__setattr__(
                self, "noise_sigma",
                _check_range("noise_sigma", self.noise_sigma,
                             lo_bound=0.0, hi_bound=0.25))
        if self.max_visibility_attempts < 1:
            raise ConfigError("max_visibility_attempts must be >= 1")

    def to_json(self) -> dict:
        return {
            "hdri_pool": list(self.hdri_pool),
            "material_strategy": self.material_strategy.value,
            "hdri_rotation": list(self.hdri_rotation),
            "light_intensity_scale": list(self.light_intensity_scale),
            "light_color_tint": list(self.light_color_tint),
            "camera_translation_jitter": self.camera_translation_jitter,
            "camera_rotation_jitter": self.camera_rotation_jitter,
            "noise_sigma": (None if self.noise_sigma is None
                            else list(self.noise_sigma)),
            "background": self.background.to_json(),
            "distractors": self.distractors.to_json(),
            "max_visibility_attempts": self.max_visibility_attempts,
        }

    @staticmethod
    def from_json(data: dict) -> "RandomizationConfig":
        try:
            return RandomizationConfig(
                hdri_pool=tuple(data["hdri_pool"]),
                material_strategy=MaterialStrategy(
                    data.get("material_strategy", "complex")),
                hdri_rotation=tuple(data.get("hdri_rotation", (0.0, _TWO_PI))),
                light_intensity_scale=tuple(
                    data.get("light_intensity_scale", (0.3, 3.0))),
                light_color_tint=tuple(data.get("light_color_tint", (0.7, 1.3))),
                camera_translation_jitter=data.get(
                    "camera_translation_jitter", 0.05),
                camera_rotation_jitter=data.get(
                    "camera_rotation_jitter", math.radians(5.0)),
                noise_sigma=(None if data.get("noise_sigma") is None
                             else tuple(data["noise_sigma"])),
                background=BackgroundConfig.from_json(
                    data.get("background", {"mode": "hdri_only"})),
                distractors=DistractorConfig.from_json(
                    data.get("distractors", {"mode": "none"})),
                max_visibility_attempts=data.get("max_visibility_attempts", 100),
            )
        except KeyError as exc:
            raise ConfigError(f"randomization config missing field {exc}") from exc


@dataclass(frozen=True)
class DistractorPlacement:
    """One piece of clutter: its shape source, pose, and material."""

    shape: str                      # primitive name or mesh file path
    size: float                     # target max extent in meters
    transform: Transform
    material: MaterialSpec

    def to_json(self) -> dict:
        return {"shape": self.shape, "size": self.size,
                "transform": self.transform.to_json(),
                "material": self.material.to_json()}

    @staticmethod
    def from_json(data: dict) -> "DistractorPlacement":
        return DistractorPlacement(
            shape=data["shape"], size=data["size"],
            transform=Transform.from_json(data["transform"]),
            material=MaterialSpec.from_json(data["material"]))


@dataclass(frozen=True)
class ScenarioSample:
    """Fully-resolved randomization outcome for one frame."""

    frame_seed: int
    materials: tuple[tuple[int, MaterialSpec], ...]   # (instance_id, material)
    hdri_path: str
    hdri_rotation: float
    light_intensity: float
    light_tint: tuple[float, float, float]
    camera_pose: Transform
    background_image: str | None
    distractors: tuple[DistractorPlacement, ...]
    noise_sigma: float

    def to_json(self) -> dict:
        return {
            "frame_seed": int(self.frame_seed),
            "materials": [[iid, m.to_json()] for iid, m in self.materials],
            "hdri_path": self.hdri_path,
            "hdri_rotation": self.hdri_rotation,
            "light_intensity": self.light_intensity,
            "light_tint": list(self.light_tint),
            "camera_pose": self.camera_pose.to_json(),
            "background_image": self.background_image,
            "distractors": [d.to_json() for d in self.distractors],
            "noise_sigma": self.noise_sigma,
        }

    @staticmethod
    def from_json(data: dict) -> "ScenarioSample":
        return ScenarioSample(
            frame_seed=data["frame_seed"],
            materials=tuple((iid, MaterialSpec.from_json(m))
                            for iid, m in data["materials"]),
            hdri_path=data["hdri_path"],
            hdri_rotation=data["hdri_rotation"],
            light_intensity=data["light_intensity"],
            light_tint=tuple(data["light_tint"]),
            camera_pose=Transform.from_json(data["camera_pose"]),
            background_image=data.get("background_image"),
            distractors=tuple(DistractorPlacement.from_json(d)
                              for d in data.get("distractors", ())),
            noise_sigma=data.get("noise_sigma", 0.0))

    def digest(self) -> str:
        canon = json.dumps(self.to_json(), sort_keys=True,
                           separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


# ---------------------------------------------------------------------------
# pools and caches


def list_pool(directory: str | Path, suffixes) -> list[str]:
    """Deterministic (sorted) listing of pool files by extension."""
    d = Path(directory)
    if not d.is_dir():
        raise ConfigError(f"pool directory {d} does not exist")
    out = sorted(str(p) for p in d.iterdir()
                 if p.suffix.lower() in suffixes)
    if not out:
        raise ConfigError(f"pool directory {d} holds no usable files "
                          f"(wanted {', '.join(suffixes)})")
    return out


_HDR_CACHE: dict[str, np.ndarray] = {}
_IMG_CACHE: dict[str, np.ndarray] = {}
_MESH_CACHE: dict[str, Mesh] = {}


def cached_hdr(path: str) -> np.ndarray:
    key = str(Path(path).resolve())
    if key not in _HDR_CACHE:
        _HDR_CACHE[key] = read_hdr(path)
    return _HDR_CACHE[key]


def cached_image(path: str) -> np.ndarray:
    from PIL import Image
    key = str(Path(path).resolve())
    if key not in _IMG_CACHE:
        arr = np.asarray(Image.open(path).convert("RGB"))
        arr.flags.writeable = False
        _IMG_CACHE[key] = arr
    return _IMG_CACHE[key]


def cached_mesh(path: str) -> Mesh:
    key = str(Path(path).resolve())
    if key not in _MESH_CACHE:
        _MESH_CACHE[key] = load_mesh(path)
    return _MESH_CACHE[key]


def clear_asset_caches() -> None:
    _HDR_CACHE.clear()
    _IMG_CACHE.clear()
    _MESH_CACHE.clear()


# ---------------------------------------------------------------------------
# sampling


def _uniform(rng, lo, hi):
    if hi == lo:
        return lo
    return float(rng.uniform(lo, hi))


def _distractor_source_mesh(shape: str, size: float) -> Mesh:
    if shape in _PRIMITIVE_SHAPES:
        return distractor_mesh(shape, size)
    return cached_mesh(shape)


def _distractor_scale(shape: str, size: float) -> float:
    """Uniform scale bringing the source mesh to the target extent."""
    if shape in _PRIMITIVE_SHAPES:
        return 1.0
    mesh = cached_mesh(shape)
    extent = float((mesh.vertices.max(axis=0) - mesh.vertices.min(axis=0)).max())
    if extent <= 0:
        raise ConfigError(f"mesh {shape} has zero extent")
    return size / extent


def _distractor_world_aabb(d: DistractorPlacement) -> Aabb:
    mesh = _distractor_source_mesh(d.shape, d.size)
    return Aabb.from_points(d.transform.apply_points(mesh.vertices))


def sample_scenario(config: RandomizationConfig, scene: SceneGraph,
                    frame_seed: int) -> ScenarioSample:
    """Draw one frame's randomization outcome.

    Draw order is fixed: materials, HDRI choice, HDRI rotation, light
    intensity, light tint, camera pose, background image, distractors,
    noise sigma.  Camera poses are redrawn until the region of interest
    is fully inside the view frustum; distractors are redrawn until
    their bounding boxes clear both the region of interest and the
    camera position.  Exhausting ``max_visibility_attempts`` raises a
    scenario error naming the failed constraint.
    """
    rng = np.random.Generator(np.random.PCG64(np.uint64(frame_seed)))

    # 1. materials, in scene part order
    library = None
    if config.material_strategy is MaterialStrategy.COMPLEX_LIBRARY:
        library = _default_library()
    materials = []
    for part in scene.parts:
        mat = sample_material(config.material_strategy, library, part, rng)
        materials.append((part.instance_id, mat))

    # 2..5. lighting
    hdri_idx = int(rng.integers(len(config.hdri_pool)))
    hdri_path = config.hdri_pool[hdri_idx]
    rotation = _uniform(rng, *config.hdri_rotation)
    lo, hi = config.light_intensity_scale
    intensity = (lo if hi == lo
                 else float(math.exp(rng.uniform(math.log(lo), math.log(hi)))))
    tlo, thi = config.light_color_tint
    tint = tuple(_uniform(rng, tlo, thi) for _ in range(3))

    # 6. camera, rejection-sampled for ROI visibility
    base = scene.camera
    tj = config.camera_translation_jitter
    rj = config.camera_rotation_jitter
    pose = None
    for _ in range(config.max_visibility_attempts):
        dt = np.array([_uniform(rng, -tj, tj) for _ in range(3)])
        ang = [_uniform(rng, -rj, rj) for _ in range(3)]
        rot = base.pose.rotation @ euler_xyz_to_matrix(*ang)
        cand = Transform(rotation=rot,
                         translation=base.pose.translation + dt)
        cam = replace(base, pose=cand)
        if roi_fully_visible(cam, scene.roi.box):
            pose = cand
            break
    if pose is None:
        raise ScenarioError(
            f"camera jitter kept the region of interest out of frame for "
            f"{config.max_visibility_attempts} attempts (frame seed "
            f"{frame_seed})")

    # 7. background
    background_image = None
    if config.background.mode is not BackgroundMode.HDRI_ONLY:
        pool = list_pool(config.background.image_dir, _IMAGE_SUFFIXES)
        background_image = pool[int(rng.integers(len(pool)))]

    # 8. distractors
    distractors = []
    dconf = config.distractors
    if dconf.mode is not DistractorMode.NONE:
        mesh_pool = None
        if dconf.mode is DistractorMode.COMPLEX_MESH_POOL:
            mesh_pool = list_pool(dconf.mesh_dir, _MESH_SUFFIXES)
        clo, chi = dconf.count_range
        n = int(rng.integers(clo, chi + 1)) if chi > clo else clo
        roi = scene.roi.box
        roi_center = roi.center
        roi_radius = 0.5 * roi.diagonal
        cam_pos = pose.translation
        slo, shi = dconf.size_range
        for _ in range(n):
            if mesh_pool is not None:
                shape = mesh_pool[int(rng.integers(len(mesh_pool)))]
            else:
                shape = _PRIMITIVE_SHAPES[int(rng.integers(3))]
            size = float(math.exp(rng.uniform(math.log(slo), math.log(shi))))
            mat = sample_random_color_material(rng)
            placed = None
            for _ in range(config.max_visibility_attempts):
                # uniform direction, radius in a shell just outside the ROI
                v = rng.normal(size=3)
                norm = float(np.linalg.norm(v))
                if norm < 1e-12:
                    continue
                direction = v / norm
                radius = _uniform(rng, roi_radius + size,
                                  roi_radius + size + 2.0 * roi_radius)
                center = roi_center + direction * radius
                angles = [_uniform(rng, 0.0, _TWO_PI) for _ in range(3)]
                cand = DistractorPlacement(
                    shape=shape, size=size,
                    transform=Transform(
                        rotation=euler_xyz_to_matrix(*angles),
                        translation=center,
                        scale=_distractor_scale(shape, size)),
                    material=mat)
                bb = _distractor_world_aabb(cand)
                if bb.intersects(roi):
                    continue
                if bb.contains_point(cam_pos):
                    continue
                placed = cand
                break
            if placed is None:
                raise ScenarioError(
                    f"distractor placement failed ROI/camera clearance for "
                    f"{config.max_visibility_attempts} attempts (frame seed "
                    f"{frame_seed})")
            distractors.append(placed)

    # 9. noise
    if config.noise_sigma is None:
        sigma = 0.0
    else:
        sigma = _uniform(rng, *config.noise_sigma)

    return ScenarioSample(
        frame_seed=int(frame_seed),
        materials=tuple(materials),
        hdri_path=hdri_path,
        hdri_rotation=rotation,
        light_intensity=intensity,
        light_tint=tint,
        camera_pose=pose,
        background_image=background_image,
        distractors=tuple(distractors),
        noise_sigma=sigma)


_LIBRARY_CACHE: list = []


def _default_library() -> MaterialLibrary:
    if not _LIBRARY_CACHE:
        from .materials import generate_default_library
        _LIBRARY_CACHE.append(generate_default_library())
    return _LIBRARY_CACHE[0]


# ---------------------------------------------------------------------------
# applying a scenario


def _backplate_for(scene: SceneGraph, pose: Transform,
                   image_path: str) -> Backplate:
    """Camera-facing quad behind the region of interest, sized to cover
    the view frustum with margin."""
    cam = scene.camera
    roi = scene.roi.box
    cam_pos = pose.translation
    roi_center = roi.center
    roi_radius = 0.5 * roi.diagonal
    dist = float(np.linalg.norm(roi_center - cam_pos)) + 2.0 * roi_radius
    w, h = cam.resolution
    half_h = dist * math.tan(cam.vertical_fov * 0.5) * (w / h + 1.0)
    half_w = half_h
    fwd = -pose.rotation[:, 2]
    right = pose.rotation[:, 0]
    up = pose.rotation[:, 1]
    center = cam_pos + fwd * dist
    corners = np.array([
        center - half_w * right + half_h * up,    # top-left
        center + half_w * right + half_h * up,    # top-right
        center + half_w * right - half_h * up,    # bottom-right
        center - half_w * right - half_h * up,    # bottom-left
    ])
    return Backplate(corners=corners, image=cached_image(image_path),
                     image_path=image_path)


def apply_scenario(scene: SceneGraph, sample: ScenarioSample) -> SceneGraph:
    """Bind a sampled scenario to a scene, producing the frame's scene.

    The labeled-part set is preserved exactly; distractors append as
    unlabeled parts with fresh instance ids above the existing maximum.
    """
    mat_by_id = dict(sample.materials)
    parts = [replace(p, material=mat_by_id.get(p.instance_id, p.material))
             for p in scene.parts]

    next_id = max(p.instance_id for p in scene.parts) + 1
    for d in sample.distractors:
        mesh = _distractor_source_mesh(d.shape, d.size)
        parts.append(PartInstance(
            mesh=mesh, transform=d.transform, instance_id=next_id,
            class_label=None, material=d.material,
            name=f"distractor_{next_id}"))
        next_id += 1

    env = EnvironmentLight(
        radiance=cached_hdr(sample.hdri_path),
        rotation=sample.hdri_rotation,
        intensity_scale=sample.light_intensity,
        color_tint=sample.light_tint)

    camera = replace(scene.camera, pose=sample.camera_pose)

    backplate = None
    if sample.background_image is not None:
        backplate = _backplate_for(scene, sample.camera_pose,
                                   sample.background_image)

    return SceneGraph(
        parts=tuple(parts),
        camera=camera,
        environment=env,
        roi=scene.roi,
        backplate=backplate,
        environment_path=sample.hdri_path)
