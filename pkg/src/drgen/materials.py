"""PBR metallic-roughness materials and the randomization material pool.

The default pool holds 115 entries stratified into textureless
dielectrics, metals, and procedurally textured materials so that draws
from it cover a wide range of structure and color.
"""
from __future__ import annotations

import colorsys
import enum
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

ROUGHNESS_FLOOR = 0.02  # keeps the microfacet distribution non-singular

PATTERN_KINDS = ("checker", "stripe", "noise")

DEFAULT_LIBRARY_SIZE = 115
_NUM_DIELECTRIC = 40
_NUM_METAL = 30
_NUM_TEXTURED = 45


def _check_unit(name: str, value: float) -> float:
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ConfigError(f"{name} must be in [0, 1], got {value}")
    return value


def _check_rgb(name: str, rgb) -> tuple[float, float, float]:
    rgb = tuple(float(c) for c in rgb)
    if len(rgb) != 3 or any(not 0.0 <= c <= 1.0 for c in rgb):
        raise ConfigError(f"{name} must be three values in [0, 1], got {rgb}")
    return rgb


@dataclass(frozen=True)
class TextureSpec:
    """Procedural object-space pattern; needs no UV coordinates."""

    kind: str                         # one of PATTERN_KINDS
    color_a: tuple[float, float, float]
    color_b: tuple[float, float, float]
    frequency: float                  # cycles per meter in object space

    def __post_init__(self):
        if self.kind not in PATTERN_KINDS:
            raise ConfigError(f"unknown pattern kind {self.kind!r}")
        object.__setattr__(self, "color_a", _check_rgb("color_a", self.color_a))
        object.__setattr__(self, "color_b", _check_rgb("color_b", self.color_b))
        if not self.frequency > 0:
            raise ConfigError(f"texture frequency must be positive, got {self.frequency}")
        object.__setattr__(self, "frequency", float(self.frequency))

    def to_json(self) -> dict:
        return {"kind": self.kind, "color_a": list(self.color_a),
                "color_b": list(self.color_b), "frequency": self.frequency}

    @classmethod
    def from_json(cls, d: dict) -> "TextureSpec":
        return cls(d["kind"], tuple(d["color_a"]), tuple(d["color_b"]), d["frequency"])


@dataclass(frozen=True)
class MaterialSpec:
    """Metallic-roughness parameter set in linear color space.

    ``specular`` scales the 0.04 dielectric base reflectance.
    """

    base_color: tuple[float, float, float]
    metalness: float
    roughness: float
    specular: float
    texture: TextureSpec | None = None

    def __post_init__(self):
        object.__setattr__(self, "base_color", _check_rgb("base_color", self.base_color))
        object.__setattr__(self, "metalness", _check_unit("metalness", self.metalness))
        object.__setattr__(self, "specular", _check_unit("specular", self.specular))
        r = float(self.roughness)
        if not ROUGHNESS_FLOOR <= r <= 1.0:
            raise ConfigError(f"roughness must be in [{ROUGHNESS_FLOOR}, 1], got {r}")
        object.__setattr__(self, "roughness", r)

    def to_json(self) -> dict:
        d = {
            "base_color": list(self.base_color),
            "metalness": self.metalness,
            "roughness": self.roughness,
            "specular": self.specular,
        }
        if self.texture is not None:
            d["texture"] = self.texture.to_json()
        return d

    @classmethod
    def from_json(cls, d: dict) -> "MaterialSpec":
        tex = TextureSpec.from_json(d["texture"]) if d.get("texture") else None
        return cls(tuple(d["base_color"]), d["metalness"], d["roughness"],
                   d["specular"], tex)


@dataclass(frozen=True)
class MaterialLibrary:
    entries: tuple[MaterialSpec, ...]
    name: str

    def __post_init__(self):
        if len(self.entries) < 1:
            raise ConfigError("material library must have at least one entry")
        object.__setattr__(self, "entries", tuple(self.entries))

    def __len__(self) -> int:
        return len(self.entries)

    def to_json(self) -> dict:
        return {"name": self.name, "entries": [m.to_json() for m in self.entries]}

    @classmethod
    def from_json(cls, d: dict) -> "MaterialLibrary":
        return cls(tuple(MaterialSpec.from_json(m) for m in d["entries"]), d["name"])


class MaterialStrategy(str, enum.Enum):
    """How per-part materials are chosen for each frame."""

    COMPLEX_LIBRARY = "complex"
    PHOTO_REALISTIC = "photo_realistic"
    RANDOM_COLOR = "random_color"


def _random_color(rng: np.random.Generator) -> tuple[float, float, float]:
    return tuple(float(c) for c in rng.uniform(0.0, 1.0, size=3))


def generate_default_library(seed: int = 2024) -> MaterialLibrary:
    """Procedural 115-entry pool: 40 textureless dielectrics with spread
    hues, 30 metals, and 45 textured entries (15 each checker / stripe /
    noise).  Deterministic for a given seed."""
    rng = np.random.Generator(np.random.PCG64(seed))
    entries: list[MaterialSpec] = []

    for i in range(_NUM_DIELECTRIC):
        hue = i / _NUM_DIELECTRIC
        sat = float(rng.uniform(0.2, 1.0))
        val = float(rng.uniform(0.15, 1.0))
        rgb = colorsys.hsv_to_rgb(hue, sat, val)
        entries.append(MaterialSpec(
            base_color=tuple(round(c, 6) for c in rgb),
            metalness=0.0,
            roughness=float(rng.uniform(ROUGHNESS_FLOOR, 1.0)),
            specular=float(rng.uniform(0.0, 1.0)),
        ))

    for _ in range(_NUM_METAL):
        tint = rng.uniform(0.4, 1.0, size=3)
        entries.append(MaterialSpec(
            base_color=tuple(float(c) for c in tint),
            metalness=float(rng.uniform(0.905, 1.0)),
            roughness=float(rng.uniform(ROUGHNESS_FLOOR, 0.7)),
            specular=float(rng.uniform(0.0, 1.0)),
        ))

    per_kind = _NUM_TEXTURED // len(PATTERN_KINDS)
    for kind in PATTERN_KINDS:
        for _ in range(per_kind):
            tex = TextureSpec(
                kind=kind,
                color_a=_random_color(rng),
                color_b=_random_color(rng),
                frequency=float(np.exp(rng.uniform(np.log(5.0), np.log(200.0)))),
            )
            entries.append(MaterialSpec(
                base_color=_random_color(rng),
                metalness=float(rng.uniform(0.0, 0.5)),
                roughness=float(rng.uniform(ROUGHNESS_FLOOR, 1.0)),
                specular=float(rng.uniform(0.0, 1.0)),
                texture=tex,
            ))

    assert len(entries) == DEFAULT_LIBRARY_SIZE
    return MaterialLibrary(tuple(entries), name=f"default-{seed}")


def sample_random_color_material(rng: np.random.Generator) -> MaterialSpec:
    """Textureless material with every parameter drawn uniformly.

    Draw order is fixed: base color (3), metalness, roughness, specular.
    """
    base = _random_color(rng)
    metal = float(rng.uniform(0.0, 1.0))
    rough = float(rng.uniform(ROUGHNESS_FLOOR, 1.0))
    spec = float(rng.uniform(0.0, 1.0))
    return MaterialSpec(base, metal, rough, spec, texture=None)


def sample_material(strategy: MaterialStrategy, library: MaterialLibrary | None,
                    part, rng: np.random.Generator) -> MaterialSpec:
    """Draw one material for a part under the given strategy.

    ``part`` supplies the fixed assignment for the photo-realistic
    strategy (its ``material`` attribute).
    """
    strategy = MaterialStrategy(strategy)
    if strategy is MaterialStrategy.COMPLEX_LIBRARY:
        if library is None or len(library) == 0:
            raise ConfigError("complex-library strategy needs a non-empty library")
        idx = int(rng.integers(0, len(library)))
        return library.entries[idx]
    if strategy is MaterialStrategy.RANDOM_COLOR:
        return sample_random_color_material(rng)
    # photo-realistic: the part's fixed material, no randomness
    fixed = getattr(part, "material", None)
    if fixed is None:
        label = getattr(part, "instance_id", "?")
        raise ConfigError(
            f"photo-realistic strategy requires a fixed material for part {label}")
    return fixed
