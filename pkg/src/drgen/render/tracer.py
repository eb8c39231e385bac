"""Render entry points: beauty + instance-ID passes, tonemap, noise.

The beauty pass is a unidirectional path tracer (metallic-roughness
BRDF, environment light with luminance-proportional importance sampling
combined with material sampling via the balance heuristic, Russian
roulette).  The ID pass casts one primary ray per pixel center.  Both
are deterministic for a fixed seed regardless of thread count because
every sample has its own counter-derived random stream.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from . import kernels
from .bvh import Bvh
from .color import linear_to_srgb
from .envlight import EnvTables, build_env_tables


@dataclass(frozen=True)
class RenderSettings:
    """Knobs for the render passes; resolution overrides the camera's."""

    resolution: tuple[int, int] = (1920, 1080)   # (width, height)
    samples_per_pixel: int = 64
    max_bounces: int = 6
    russian_roulette_start: int = 3
    seed: int = 0

    def __post_init__(self):
        w, h = self.resolution
        if w < 1 or h < 1:
            raise ConfigError(f"resolution must be positive, got {w}x{h}")
        if self.samples_per_pixel < 1:
            raise ConfigError(f"samples_per_pixel must be >= 1, got "
                              f"{self.samples_per_pixel}")
        if self.max_bounces < 1:
            raise ConfigError(f"max_bounces must be >= 1, got {self.max_bounces}")
        if self.russian_roulette_start < 0:
            raise ConfigError("russian_roulette_start must be >= 0")
        object.__setattr__(self, "resolution", (int(w), int(h)))

    def to_json(self) -> dict:
        return {"resolution": list(self.resolution),
                "samples_per_pixel": self.samples_per_pixel,
                "max_bounces": self.max_bounces,
                "russian_roulette_start": self.russian_roulette_start,
                "seed": self.seed}

    @staticmethod
    def from_json(data: dict) -> "RenderSettings":
        return RenderSettings(
            resolution=tuple(data.get("resolution", (1920, 1080))),
            samples_per_pixel=data.get("samples_per_pixel", 64),
            max_bounces=data.get("max_bounces", 6),
            russian_roulette_start=data.get("russian_roulette_start", 3),
            seed=data.get("seed", 0))


@dataclass(frozen=True)
class FrameBuffers:
    """Per-frame render products.  ``linear`` is the pre-tonemap
    radiance estimate; ``bad_samples`` counts non-finite Monte Carlo
    samples that were discarded (never written to any buffer)."""

    beauty: np.ndarray        # (H, W, 3) uint8 sRGB
    instance_id: np.ndarray   # (H, W) uint16, 0 = background/backplate
    linear: np.ndarray        # (H, W, 3) float64
    bad_samples: int = 0

    def __post_init__(self):
        if self.beauty.shape[:2] != self.instance_id.shape:
            raise ConfigError("beauty and instance_id dimensions differ")
        if self.linear.shape != self.beauty.shape:
            raise ConfigError("linear and beauty dimensions differ")


def _apply_thread_env() -> None:
    """DRGEN_THREADS limits the compiled kernels' thread pool."""
    value = os.environ.get("DRGEN_THREADS")
    if not value:
        return
    import numba
    try:
        n = int(value)
    except ValueError:
        raise ConfigError(f"DRGEN_THREADS must be an integer, got {value!r}")
    n = max(1, min(n, numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)


def _camera_arrays(camera, width, height):
    rot = np.ascontiguousarray(camera.pose.rotation)
    org = np.ascontiguousarray(camera.pose.translation)
    f_pix = (height * 0.5) / np.tan(camera.vertical_fov * 0.5)
    return rot, org, float(f_pix)


def tonemap_srgb(linear: np.ndarray) -> np.ndarray:
    """Fixed pipeline: exposure 1, sRGB transfer, 8-bit quantization."""
    return np.rint(linear_to_srgb(linear) * 255.0).astype(np.uint8)


def add_sensor_noise(image: np.ndarray, sigma: float, seed: int) -> np.ndarray:
    """Additive i.i.d. Gaussian noise in display space, clamped to [0, 1].

    Accepts float images in [0, 1] or 8-bit images (noised in [0, 1]
    then re-quantized).  sigma = 0 returns the input unchanged.
    """
    if sigma < 0:
        raise ValueError(f"noise sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return image.copy()
    rng = np.random.Generator(np.random.PCG64(np.uint64(seed)))
    if image.dtype == np.uint8:
        x = image.astype(np.float64) / 255.0
        x = np.clip(x + rng.normal(0.0, sigma, size=x.shape), 0.0, 1.0)
        return np.rint(x * 255.0).astype(np.uint8)
    x = np.asarray(image, dtype=np.float64)
    return np.clip(x + rng.normal(0.0, sigma, size=x.shape), 0.0, 1.0)


def render_instance_ids(bvh: Bvh, camera, width: int, height: int,
                        mask: np.ndarray | None = None) -> np.ndarray:
    """ID pass only: nearest hit through each pixel center among the
    parts enabled in ``mask`` (all parts when None)."""
    _apply_thread_env()
    flat = bvh.flat
    if mask is None:
        mask = flat.full_mask()
    rot, org, f_pix = _camera_arrays(camera, width, height)
    ids = np.zeros((height, width), dtype=np.int32)
    kernels.render_ids(ids, width, height, rot, org, f_pix,
                       bvh.node_min, bvh.node_max, bvh.left, bvh.right,
                       bvh.start, bvh.count, bvh.tri_order,
                       flat.tv, flat.tri_part, flat.part_instance,
                       np.ascontiguousarray(mask))
    return ids.astype(np.uint16)


def trace(scene, bvh: Bvh, settings: RenderSettings,
          env_tables: EnvTables | None = None) -> FrameBuffers:
    """Render beauty and instance-ID buffers for one frame."""
    _apply_thread_env()
    flat = bvh.flat
    width, height = settings.resolution
    if env_tables is None:
        env_tables = build_env_tables(scene.environment)
    rot, org, f_pix = _camera_arrays(scene.camera, width, height)

    linear = np.zeros((height, width, 3), dtype=np.float64)
    bad = np.zeros((height, width), dtype=np.int32)
    kernels.render_beauty(
        linear, bad,
        width, height, settings.samples_per_pixel, settings.max_bounces,
        settings.russian_roulette_start, np.uint64(settings.seed),
        rot, org, f_pix,
        bvh.node_min, bvh.node_max, bvh.left, bvh.right,
        bvh.start, bvh.count, bvh.tri_order,
        flat.tv, flat.tn, flat.tuv, flat.tri_part,
        flat.part_emissive, flat.full_mask(),
        flat.mat_base, flat.mat_metal, flat.mat_rough, flat.mat_spec,
        flat.tex_kind, flat.tex_a, flat.tex_b, flat.tex_freq, flat.inv_rows,
        flat.bp_img,
        env_tables.baked, env_tables.pdf, env_tables.alias_prob,
        env_tables.alias_idx, env_tables.row_cos,
        env_tables.rotation, env_tables.nee_prob,
        flat.scene_eps)

    ids = render_instance_ids(bvh, scene.camera, width, height)
    nonzero = np.unique(ids)
    valid = set(int(i) for i in flat.part_instance) | {0}
    for v in nonzero:
        if int(v) not in valid:
            raise ConfigError(f"ID pass produced unknown instance id {v}")

    return FrameBuffers(beauty=tonemap_srgb(linear), instance_id=ids,
                        linear=linear, bad_samples=int(bad.sum()))
