"""Equirectangular environment lighting and its sampling tables.

Directions use +Y as the vertical axis: dir = (sin t * cos p, cos t,
sin t * sin p) with polar angle t in [0, pi] mapped to rows and azimuth
p in [0, 2pi) mapped to columns.  ``rotation`` spins the map about +Y.

Sampling draws a texel from an alias table built over luminance times
texel solid angle, then jitters uniformly inside the texel, so the
sampling density matches the point-sampled radiance lookup exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import SceneError

# Rec. 709 luminance weights for linear RGB
_LUMA = np.array([0.2126, 0.7152, 0.0722])

# Bounds for the adaptive next-event-estimation rate: maps with nearly
# uniform luminance are handled almost entirely by material sampling,
# which is the low-variance strategy for them; concentrated maps get
# light sampling on every bounce.
_NEE_PROB_FLOOR = 0.002


@dataclass(frozen=True)
class EnvironmentLight:
    """HDR radiance map with rotation, intensity scale, and color tint."""

    radiance: np.ndarray            # (H, W, 3) linear float64, finite, >= 0
    rotation: float = 0.0           # radians about the vertical axis
    intensity_scale: float = 1.0
    color_tint: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        r = np.ascontiguousarray(np.asarray(self.radiance, dtype=np.float64))
        if r.ndim != 3 or r.shape[2] != 3:
            raise SceneError(f"radiance map must be (H, W, 3), got {r.shape}")
        if r.shape[1] < 8 or r.shape[0] < 4:
            raise SceneError(f"radiance map must be at least 8x4, got "
                             f"{r.shape[1]}x{r.shape[0]}")
        if not np.all(np.isfinite(r)) or np.any(r < 0):
            raise SceneError("radiance values must be finite and non-negative")
        if not (np.isfinite(self.intensity_scale) and self.intensity_scale > 0):
            raise SceneError(f"intensity scale must be positive, got {self.intensity_scale}")
        tint = tuple(float(c) for c in self.color_tint)
        if len(tint) != 3 or any(c < 0 or not np.isfinite(c) for c in tint):
            raise SceneError(f"color tint must be three non-negative values, got {tint}")
        r.flags.writeable = False
        object.__setattr__(self, "radiance", r)
        object.__setattr__(self, "rotation", float(self.rotation))
        object.__setattr__(self, "intensity_scale", float(self.intensity_scale))
        object.__setattr__(self, "color_tint", tint)

    @property
    def height(self) -> int:
        return self.radiance.shape[0]

    @property
    def width(self) -> int:
        return self.radiance.shape[1]

    def baked(self) -> np.ndarray:
        """Radiance with tint and intensity folded in."""
        tint = np.asarray(self.color_tint) * self.intensity_scale
        return np.ascontiguousarray(self.radiance * tint)


def build_alias_table(weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vose alias table; O(n) build, O(1) draws.

    Returns (prob, alias): draw a slot uniformly, take it when a second
    uniform is below prob[slot], else take alias[slot].
    """
    w = np.asarray(weights, dtype=np.float64).ravel()
    n = w.size
    total = w.sum()
    if n == 0 or total <= 0:
        raise ValueError("alias table needs positive total weight")
    from . import kernels

    scaled = w * (n / total)
    prob = np.ones(n, dtype=np.float64)
    alias = np.arange(n, dtype=np.int64)
    kernels.alias_build_core(scaled, prob, alias)
    return prob, alias


@dataclass(frozen=True)
class EnvTables:
    """Flattened sampling structures consumed by the render kernels."""

    baked: np.ndarray        # (H, W, 3) radiance with tint/scale applied
    pdf: np.ndarray          # (H, W) solid-angle density of the sampler
    alias_prob: np.ndarray   # (H*W,)
    alias_idx: np.ndarray    # (H*W,) int64
    row_cos: np.ndarray      # (H+1,) cos of row edge polar angles
    rotation: float
    nee_prob: float          # probability of a light sample per bounce
    total_power: float       # sum of luminance * solid angle
    mean_radiance: float = field(default=0.0)

    @property
    def height(self) -> int:
        return self.baked.shape[0]

    @property
    def width(self) -> int:
        return self.baked.shape[1]


def build_env_tables(env: EnvironmentLight) -> EnvTables:
    baked = env.baked()
    h, w = baked.shape[:2]
    luma = baked @ _LUMA

    # solid angle per texel: (2pi/W) * (cos t0 - cos t1) for each row
    theta_edges = np.linspace(0.0, np.pi, h + 1)
    row_cos = np.cos(theta_edges)
    band = row_cos[:-1] - row_cos[1:]
    solid = (2.0 * np.pi / w) * band                      # (H,)
    weights = luma * solid[:, None]                       # (H, W)
    total = float(weights.sum())

    if total <= 0.0:
        # black environment: sampler disabled, kernels skip light sampling
        pdf = np.zeros((h, w))
        alias_prob = np.ones(h * w)
        alias_idx = np.arange(h * w, dtype=np.int64)
        return EnvTables(baked, pdf, alias_prob, alias_idx, row_cos,
                         env.rotation, 0.0, 0.0, 0.0)

    p_texel = weights / total
    pdf = p_texel / solid[:, None]
    alias_prob, alias_idx = build_alias_table(p_texel)

    # luminance concentration decides how often light sampling runs:
    # relative variance of luminance over the sphere (solid-angle weighted)
    mean = total / (4.0 * np.pi)
    var = float(((luma - mean) ** 2 * solid[:, None]).sum()) / (4.0 * np.pi)
    rel_var = var / (mean * mean) if mean > 0 else 0.0
    nee_prob = float(np.clip(rel_var, _NEE_PROB_FLOOR, 1.0))

    return EnvTables(np.ascontiguousarray(baked), np.ascontiguousarray(pdf),
                     alias_prob, alias_idx, row_cos,
                     env.rotation, nee_prob, total, mean)
