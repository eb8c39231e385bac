"""Bounding-box annotations from instance-ID maps, and COCO export.

Boxes cover the visible pixel extent of each labeled part.  Occlusion is
measured exactly by re-running the ID pass with only the instance in
question enabled, which yields the pixel count it would have covered
unoccluded through the same camera.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, SceneError


@dataclass(frozen=True)
class LabelPolicy:
    """Filters for heavily occluded or sliver instances."""

    min_visible_pixels: int = 25
    min_visibility_fraction: float = 0.25

    def __post_init__(self):
        if self.min_visible_pixels < 0 or self.min_visibility_fraction < 0:
            raise ConfigError("label policy thresholds must be >= 0")

    def to_json(self) -> dict:
        return {"min_visible_pixels": self.min_visible_pixels,
                "min_visibility_fraction": self.min_visibility_fraction}

    @staticmethod
    def from_json(data: dict) -> "LabelPolicy":
        return LabelPolicy(
            min_visible_pixels=data.get("min_visible_pixels", 25),
            min_visibility_fraction=data.get("min_visibility_fraction", 0.25))


@dataclass(frozen=True)
class InstanceAnnotation:
    """One labeled part's visible-extent box in pixel coordinates.

    ``bbox`` is (x, y, w, h) with integer pixel extents: x..x+w-1 are
    the columns containing visible pixels.  ``visibility_fraction``
    compares against the solo-pass pixel count of the same instance.
    """

    instance_id: int
    class_label: str
    bbox: tuple[int, int, int, int]
    visible_pixels: int
    unoccluded_pixels: int

    def __post_init__(self):
        x, y, w, h = self.bbox
        if w < 1 or h < 1:
            raise SceneError(f"bbox must span at least one pixel, got {self.bbox}")
        if self.visible_pixels < 1:
            raise SceneError("annotation needs at least one visible pixel")
        if self.visible_pixels > self.unoccluded_pixels:
            raise SceneError(
                f"visible pixel count {self.visible_pixels} exceeds solo-pass "
                f"count {self.unoccluded_pixels}")

    @property
    def visibility_fraction(self) -> float:
        if self.unoccluded_pixels == 0:
            return 0.0
        return self.visible_pixels / self.unoccluded_pixels

    def to_json(self) -> dict:
        return {"instance_id": self.instance_id,
                "class_label": self.class_label,
                "bbox": list(self.bbox),
                "visible_pixels": self.visible_pixels,
                "unoccluded_pixels": self.unoccluded_pixels}

    @staticmethod
    def from_json(data: dict) -> "InstanceAnnotation":
        return InstanceAnnotation(
            instance_id=data["instance_id"],
            class_label=data["class_label"],
            bbox=tuple(data["bbox"]),
            visible_pixels=data["visible_pixels"],
            unoccluded_pixels=data["unoccluded_pixels"])


def annotations_from_id_maps(id_map: np.ndarray, solo_counts: dict[int, int],
                             labels: dict[int, str],
                             policy: LabelPolicy) -> list[InstanceAnnotation]:
    """Pure reduction from pixel data to annotations.

    ``solo_counts`` maps instance id -> unoccluded pixel count;
    ``labels`` maps instance id -> class label for labeled parts only.
    """
    out = []
    for iid in sorted(labels):
        ys, xs = np.nonzero(id_map == iid)
        visible = int(ys.size)
        if visible == 0:
            continue
        solo = int(solo_counts[iid])
        ann = InstanceAnnotation(
            instance_id=iid,
            class_label=labels[iid],
            bbox=(int(xs.min()), int(ys.min()),
                  int(xs.max() - xs.min() + 1), int(ys.max() - ys.min() + 1)),
            visible_pixels=visible,
            unoccluded_pixels=solo)
        if visible < policy.min_visible_pixels:
            continue
        if ann.visibility_fraction < policy.min_visibility_fraction:
            continue
        out.append(ann)
    return out


def extract_annotations(frame, scene, policy: LabelPolicy | None = None,
                        bvh=None) -> list[InstanceAnnotation]:
    """Annotations for one rendered frame.

    Runs one solo-visibility ID pass per labeled part to measure its
    unoccluded extent; ``bvh`` may be passed to reuse the acceleration
    structure already built for rendering.
    """
    from .render.bvh import build_bvh
    from .render.tracer import render_instance_ids

    if policy is None:
        policy = LabelPolicy()
    id_map = frame.instance_id
    h, w = id_map.shape
    if bvh is None:
        bvh = build_bvh(scene)
    labels = {p.instance_id: p.class_label for p in scene.labeled_parts}
    present = set(int(v) for v in np.unique(id_map)) - {0}
    scene_ids = {p.instance_id for p in scene.parts}
    unknown = present - scene_ids
    if unknown:
        raise SceneError(f"ID map contains ids not in the scene: {sorted(unknown)}")

    solo_counts = {}
    for iid in sorted(labels):
        if iid not in present:
            continue
        mask = bvh.flat.mask_for_instance(iid)
        solo = render_instance_ids(bvh, scene.camera, w, h, mask=mask)
        solo_counts[iid] = int(np.count_nonzero(solo == iid))
    labels_present = {i: l for i, l in labels.items() if i in present}
    return annotations_from_id_maps(id_map, solo_counts, labels_present, policy)


# ---------------------------------------------------------------------------
# COCO export


def coco_categories(class_names) -> list[dict]:
    """Category records with ids 1..K assigned by sorted name."""
    names = sorted(set(class_names))
    return [{"id": i + 1, "name": n} for i, n in enumerate(names)]


def export_coco(frames: list[dict], categories: list[dict]) -> dict:
    """Assemble a COCO object-detection document.

    ``frames`` is a list of {"id", "file_name", "width", "height",
    "annotations": [InstanceAnnotation or its JSON form]}.  Output
    ordering is deterministic: images sorted by id, annotations sorted
    by (image id, instance id), annotation ids dense from 1.
    """
    cat_by_name = {c["name"]: c["id"] for c in categories}
    if len(cat_by_name) != len(categories):
        raise ConfigError("duplicate category names in COCO export")
    ids = [f["id"] for f in frames]
    if len(set(ids)) != len(ids):
        raise ConfigError("duplicate image ids in COCO export")

    images = []
    annotations = []
    next_id = 1
    for f in sorted(frames, key=lambda f: f["id"]):
        images.append({"id": int(f["id"]), "file_name": f["file_name"],
                       "width": int(f["width"]), "height": int(f["height"])})
        anns = f.get("annotations", [])
        anns = [a.to_json() if isinstance(a, InstanceAnnotation) else a
                for a in anns]
        for a in sorted(anns, key=lambda a: a["instance_id"]):
            x, y, w, h = a["bbox"]
            label = a["class_label"]
            if label not in cat_by_name:
                raise ConfigError(f"annotation class {label!r} has no category")
            annotations.append({
                "id": next_id,
                "image_id": int(f["id"]),
                "category_id": cat_by_name[label],
                "bbox": [float(x), float(y), float(w), float(h)],
                "area": float(w) * float(h),
                "iscrowd": 0,
            })
            next_id += 1
    return {"images": images, "annotations": annotations,
            "categories": categories}


def write_coco(doc: dict, path) -> None:
    from pathlib import Path
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n",
                 encoding="utf-8")
