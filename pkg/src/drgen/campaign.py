"""Campaign orchestration: scenario -> render -> label -> export.

Every frame is an independent, deterministic function of (config, frame
index): its random stream seed and its train/val assignment both derive
from documented 64-bit hashes of (master_seed, index).  Per-frame
artifacts land atomically, so an interrupted campaign resumes by
completing exactly the missing frames, and the final reduction (COCO
files + manifest) is byte-identical to an uninterrupted run.

Output layout::

    config.json            exact config snapshot
    checkpoint.json        config digest guarding resume
    manifest.json          per-frame records + counts + tool version
    materials.json         material strategy and library snapshot
    images/{train,val}/NNNNNN.png    8-bit beauty renders
    ids/{train,val}/NNNNNN.png       16-bit instance-id maps
    scenarios/NNNNNN.json  fully-resolved per-frame randomization
    frames/NNNNNN.json     per-frame record incl. unfiltered instances
    annotations/train.json, annotations/val.json   COCO detection files
"""
from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError
from .labeler import (LabelPolicy, annotations_from_id_maps, coco_categories,
                      export_coco, write_coco)
from .materials import MaterialStrategy, generate_default_library
from .randomizer import RandomizationConfig, apply_scenario, sample_scenario
from .render.bvh import build_bvh
from .render.tracer import (RenderSettings, add_sensor_noise,
                            render_instance_ids, trace)
from .scene import SceneGraph, load_scene

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_SPLIT_SALT = 0xA24BAED4963EE407
_NOISE_SALT = 0x9FB21C651E98DF25


def _mix64(x: int) -> int:
    """splitmix64 finalizer over python ints (mod 2^64)."""
    x &= _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def frame_seed(master_seed: int, index: int) -> int:
    """Seed for frame ``index``: mixed counter stream, collision-free
    across indices for a fixed master seed (the increment is odd, hence
    injective mod 2^64, and the finalizer is a bijection)."""
    return _mix64((master_seed + index * _GOLDEN) & _MASK)


def frame_split(master_seed: int, index: int, train_fraction: float) -> str:
    """Deterministic per-frame split: validation iff a salted hash of
    (master_seed, index) mod 100 falls below the validation percentage."""
    val_pct = round((1.0 - train_fraction) * 100.0)
    h = _mix64(((master_seed ^ _SPLIT_SALT) + index * _GOLDEN) & _MASK)
    return "val" if (h % 100) < val_pct else "train"


@dataclass(frozen=True)
class CampaignConfig:
    """Everything needed to (re)generate a dataset."""

    scene_path: str
    randomization: RandomizationConfig
    render: RenderSettings = field(default_factory=RenderSettings)
    label_policy: LabelPolicy = field(default_factory=LabelPolicy)
    total_images: int = 10_000
    train_fraction: float = 0.8
    master_seed: int = 0
    output_dir: str = "dataset"

    def __post_init__(self):
        if self.total_images < 1:
            raise ConfigError(f"total_images must be >= 1, got {self.total_images}")
        if not (0.0 < self.train_fraction < 1.0):
            raise ConfigError(
                f"train_fraction must be inside (0, 1), got {self.train_fraction}")

    def to_json(self) -> dict:
        return {
            "scene_path": self.scene_path,
            "randomization": self.randomization.to_json(),
            "render": self.render.to_json(),
            "label_policy": self.label_policy.to_json(),
            "total_images": self.total_images,
            "train_fraction": self.train_fraction,
            "master_seed": self.master_seed,
            "output_dir": self.output_dir,
        }

    @staticmethod
    def from_json(data: dict) -> "CampaignConfig":
        try:
            return CampaignConfig(
                scene_path=data["scene_path"],
                randomization=RandomizationConfig.from_json(data["randomization"]),
                render=RenderSettings.from_json(data.get("render", {})),
                label_policy=LabelPolicy.from_json(data.get("label_policy", {})),
                total_images=data.get("total_images", 10_000),
                train_fraction=data.get("train_fraction", 0.8),
                master_seed=data.get("master_seed", 0),
                output_dir=data.get("output_dir", "dataset"),
            )
        except KeyError as exc:
            raise ConfigError(f"campaign config missing field {exc}") from exc

    def digest(self) -> str:
        """Digest over generation-relevant fields; the output location
        is excluded so a moved campaign can still resume."""
        doc = self.to_json()
        doc.pop("output_dir")
        canon = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


def load_campaign_config(path: str | Path) -> CampaignConfig:
    """Read a campaign config file; relative paths inside it (scene,
    pools, output) resolve against the config file's directory."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    cfg = CampaignConfig.from_json(data)
    base = path.parent

    def resolve(p):
        return str((base / p).resolve()) if p and not Path(p).is_absolute() else p

    rand = cfg.randomization
    rand = replace(
        rand,
        hdri_pool=tuple(resolve(p) for p in rand.hdri_pool),
        background=replace(rand.background,
                           image_dir=resolve(rand.background.image_dir)),
        distractors=replace(rand.distractors,
                            mesh_dir=resolve(rand.distractors.mesh_dir)))
    return replace(cfg, scene_path=resolve(cfg.scene_path),
                   randomization=rand,
                   output_dir=resolve(cfg.output_dir))


# ---------------------------------------------------------------------------
# per-frame pipeline


def _write_atomic(path: Path, data: bytes) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def _png_bytes(arr: np.ndarray) -> bytes:
    from io import BytesIO
    from PIL import Image
    buf = BytesIO()
    if arr.dtype == np.uint16:
        img = Image.fromarray(arr.astype(np.int32), mode="I")
        img = img.convert("I;16")
    else:
        img = Image.fromarray(arr)
    img.save(buf, format="PNG")
    return buf.getvalue()


def read_id_map(path: str | Path) -> np.ndarray:
    from PIL import Image
    return np.asarray(Image.open(path), dtype=np.uint16)


def _json_bytes(doc) -> bytes:
    return (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode()


def render_frame(config: CampaignConfig, scene: SceneGraph,
                 index: int) -> dict:
    """Run the full per-frame pipeline; returns the frame record with
    the rendered arrays attached under "beauty" and "ids".

    The record's "instances" list is unfiltered (policy thresholds are
    applied at annotation-export time) so labeling can be re-run later
    from stored data alone.
    """
    fs = frame_seed(config.master_seed, index)
    split = frame_split(config.master_seed, index, config.train_fraction)
    sample = sample_scenario(config.randomization, scene, fs)
    frame_scene = apply_scenario(scene, sample)
    bvh = build_bvh(frame_scene)
    settings = replace(config.render, seed=fs)
    fb = trace(frame_scene, bvh, settings)

    beauty = fb.beauty
    if sample.noise_sigma > 0:
        beauty = add_sensor_noise(beauty, sample.noise_sigma,
                                  _mix64(fs ^ _NOISE_SALT))

    # unfiltered instance measurements (policy applied later)
    labels = {p.instance_id: p.class_label for p in frame_scene.labeled_parts}
    present = set(int(v) for v in np.unique(fb.instance_id)) - {0}
    solo_counts = {}
    w, h = settings.resolution
    for iid in sorted(labels):
        if iid not in present:
            continue
        mask = bvh.flat.mask_for_instance(iid)
        solo = render_instance_ids(bvh, frame_scene.camera, w, h, mask=mask)
        solo_counts[iid] = int(np.count_nonzero(solo == iid))
    raw = annotations_from_id_maps(
        fb.instance_id, solo_counts,
        {i: l for i, l in labels.items() if i in present},
        LabelPolicy(min_visible_pixels=1, min_visibility_fraction=0.0))

    record = {
        "index": index,
        "frame_seed": fs,
        "split": split,
        "image": f"images/{split}/{index:06d}.png",
        "id_map": f"ids/{split}/{index:06d}.png",
        "width": w,
        "height": h,
        "scenario_digest": sample.digest(),
        "instances": [a.to_json() for a in raw],
        "bad_samples": fb.bad_samples,
    }
    return {"record": record, "sample": sample, "beauty": beauty,
            "ids": fb.instance_id}


def write_frame(out: Path, frame: dict) -> None:
    """Persist one frame's artifacts; the frame record lands last so
    its presence marks the frame complete."""
    record = frame["record"]
    index = record["index"]
    for sub in ("images/train", "images/val", "ids/train", "ids/val",
                "scenarios", "frames"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    _write_atomic(out / record["image"], _png_bytes(frame["beauty"]))
    _write_atomic(out / record["id_map"], _png_bytes(frame["ids"]))
    _write_atomic(out / "scenarios" / f"{index:06d}.json",
                  _json_bytes(frame["sample"].to_json()))
    _write_atomic(out / "frames" / f"{index:06d}.json", _json_bytes(record))


# ---------------------------------------------------------------------------
# campaign drivers


def _scene_categories(scene: SceneGraph) -> list[dict]:
    return coco_categories(p.class_label for p in scene.labeled_parts)


def _finalize(config: CampaignConfig, scene: SceneGraph,
              out: Path) -> dict:
    """Deterministic reduction of per-frame records into COCO files and
    the manifest."""
    records = []
    for i in range(config.total_images):
        p = out / "frames" / f"{i:06d}.json"
        if not p.is_file():
            raise ConfigError(f"frame {i} record missing; campaign incomplete")
        records.append(json.loads(p.read_text(encoding="utf-8")))

    categories = _scene_categories(scene)
    policy = config.label_policy
    for split in ("train", "val"):
        frames = []
        for r in records:
            if r["split"] != split:
                continue
            kept = [a for a in r["instances"]
                    if a["visible_pixels"] >= policy.min_visible_pixels
                    and (a["visible_pixels"] / max(1, a["unoccluded_pixels"]))
                    >= policy.min_visibility_fraction]
            frames.append({"id": r["index"], "file_name": r["image"],
                           "width": r["width"], "height": r["height"],
                           "annotations": kept})
        write_coco(export_coco(frames, categories),
                   out / "annotations" / f"{split}.json")

    seeds = [r["frame_seed"] for r in records]
    if len(set(seeds)) != len(seeds):
        raise ConfigError("frame seed collision detected")

    split_counts = {"train": sum(r["split"] == "train" for r in records),
                    "val": sum(r["split"] == "val" for r in records)}
    strategy = config.randomization.material_strategy
    materials_doc = {
        "strategy": strategy.value,
        "library": (generate_default_library().to_json()
                    if strategy is MaterialStrategy.COMPLEX_LIBRARY else None),
    }
    _write_atomic(out / "materials.json", _json_bytes(materials_doc))

    manifest = {
        "tool_version": __version__,
        "config": config.to_json(),
        "config_digest": config.digest(),
        "total_images": config.total_images,
        "split_counts": split_counts,
        "categories": categories,
        "frames": [{"index": r["index"], "frame_seed": r["frame_seed"],
                    "split": r["split"], "image": r["image"],
                    "scenario_digest": r["scenario_digest"]}
                   for r in records],
    }
    _write_atomic(out / "manifest.json", _json_bytes(manifest))
    return manifest


def _prepare_scene(config: CampaignConfig) -> SceneGraph:
    scene = load_scene(config.scene_path)
    # the render resolution is authoritative for the whole pipeline
    camera = replace(scene.camera, resolution=config.render.resolution)
    return replace(scene, camera=camera)


def run_campaign(config: CampaignConfig,
                 progress=None) -> dict:
    """Generate the full dataset; returns the manifest.

    Frames render sequentially (the renderer parallelizes internally);
    each finished frame is checkpointed, so interruption at any point
    leaves a resumable directory.
    """
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "annotations").mkdir(exist_ok=True)

    digest = config.digest()
    ck_path = out / "checkpoint.json"
    if ck_path.is_file():
        ck = json.loads(ck_path.read_text(encoding="utf-8"))
        if ck.get("config_digest") != digest:
            raise ConfigError(
                "output directory holds a checkpoint for a different config "
                "(digest mismatch); refusing to mix campaigns")
    else:
        _write_atomic(ck_path, _json_bytes({"config_digest": digest}))
    _write_atomic(out / "config.json", _json_bytes(config.to_json()))

    scene = _prepare_scene(config)
    for i in range(config.total_images):
        if (out / "frames" / f"{i:06d}.json").is_file():
            continue
        frame = render_frame(config, scene, i)
        write_frame(out, frame)
        if progress is not None:
            progress(i, config.total_images)
    return _finalize(config, scene, out)


def relabel_campaign(output_dir: str | Path, policy: LabelPolicy) -> dict:
    """Re-derive the exported annotations under a new label policy.

    Per-frame records store every rendered instance unfiltered, so the
    thresholds can change without re-rendering: the stored config is
    rewritten with the new policy and the reduction re-runs.
    """
    out = Path(output_dir)
    cfg_path = out / "config.json"
    if not cfg_path.is_file():
        raise ConfigError(f"{out} holds no campaign (missing config.json)")
    stored = CampaignConfig.from_json(
        json.loads(cfg_path.read_text(encoding="utf-8")))
    config = replace(stored, label_policy=policy,
                     output_dir=str(out))
    _write_atomic(cfg_path, _json_bytes(config.to_json()))
    _write_atomic(out / "checkpoint.json",
                  _json_bytes({"config_digest": config.digest()}))
    scene = _prepare_scene(config)
    return _finalize(config, scene, out)


def resume_campaign(output_dir: str | Path,
                    config: CampaignConfig | None = None) -> dict:
    """Complete a partially generated campaign.

    The stored checkpoint digest must match the (supplied or stored)
    config; a mismatch aborts rather than mixing two campaigns.
    """
    out = Path(output_dir)
    cfg_path = out / "config.json"
    ck_path = out / "checkpoint.json"
    if not ck_path.is_file() or not cfg_path.is_file():
        raise ConfigError(f"{out} holds no resumable campaign "
                          f"(missing checkpoint.json/config.json)")
    stored = CampaignConfig.from_json(
        json.loads(cfg_path.read_text(encoding="utf-8")))
    if config is None:
        config = stored
    if config.digest() != stored.digest():
        raise ConfigError("supplied config does not match the campaign "
                          "checkpoint (digest mismatch); refusing to resume")
    config = replace(config, output_dir=str(out))
    return run_campaign(config)
