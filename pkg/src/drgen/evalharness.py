"""Detection metrics and image-level inspection verdicts.

Computes Accuracy (OK/NOK verdict correctness), Precision, Recall, and
mAP at IoU 0.5 from a COCO ground-truth file plus a COCO results-format
prediction file, under a declarative use-case rule (required per-category
counts, optional type-label classification).

Conventions, stated once here and asserted in tests:
- Matching is greedy one-to-one: detections in descending confidence
  (ties: lower detection index first), each taking the unmatched ground
  truth with the highest IoU >= threshold (ties: lower GT index).
- AP uses all-points interpolation; classes with zero ground-truth
  instances are excluded from mAP.
- Precision/recall are detection-level micro-averages over all classes
  at the rule's confidence threshold.  With no detections above the
  threshold precision is vacuously 1.0; with no ground-truth boxes
  recall is vacuously 1.0.
- For the image-level confusion counts the positive class is NOK
  (an inspection system's job is to flag defects): TP = NOK predicted
  NOK, FN = NOK predicted OK, and so on.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError


@dataclass(frozen=True)
class Detection:
    """One predicted box."""

    image_id: int
    category_id: int
    bbox: tuple[float, float, float, float]   # (x, y, w, h) pixels
    confidence: float

    def __post_init__(self):
        x, y, w, h = self.bbox
        if w <= 0 or h <= 0:
            raise FormatError(f"detection bbox needs positive size, got {self.bbox}")
        if not (0.0 <= self.confidence <= 1.0):
            raise FormatError(f"confidence must be in [0, 1], got {self.confidence}")
        object.__setattr__(self, "bbox", (float(x), float(y), float(w), float(h)))


@dataclass(frozen=True)
class UseCaseRule:
    """Image-verdict rule: an image is OK iff every constrained category
    reaches its required detection count at the confidence threshold.

    With ``type_label_categories`` set, the image must additionally show
    exactly one detection among those categories; its category is the
    predicted type, which must match the ground-truth type for the
    verdict to count as correct.
    """

    required: dict[str, int] = field(default_factory=dict)
    confidence_threshold: float = 0.5
    type_label_categories: tuple[str, ...] = ()
    name: str = ""

    def __post_init__(self):
        req = {str(k): int(v) for k, v in self.required.items()}
        if any(v < 0 for v in req.values()):
            raise ConfigError("required counts must be >= 0")
        if not req and not self.type_label_categories:
            raise ConfigError("rule must constrain at least one category")
        if not (0.0 <= self.confidence_threshold <= 1.0):
            raise ConfigError(
                f"confidence threshold must be in [0, 1], got "
                f"{self.confidence_threshold}")
        object.__setattr__(self, "required", req)
        object.__setattr__(self, "type_label_categories",
                           tuple(self.type_label_categories))

    def to_json(self) -> dict:
        return {"required": dict(self.required),
                "confidence_threshold": self.confidence_threshold,
                "type_label_categories": list(self.type_label_categories),
                "name": self.name}

    @staticmethod
    def from_json(data: dict) -> "UseCaseRule":
        return UseCaseRule(
            required=data.get("required", {}),
            confidence_threshold=data.get("confidence_threshold", 0.5),
            type_label_categories=tuple(data.get("type_label_categories", ())),
            name=data.get("name", ""))


def load_rule(path: str | Path) -> UseCaseRule:
    try:
        return UseCaseRule.from_json(
            json.loads(Path(path).read_text(encoding="utf-8")))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read rule file {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# geometry


def iou(a, b) -> float:
    """Intersection over union of two (x, y, w, h) boxes."""
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    ix = max(0.0, min(ax + aw, bx + bw) - max(ax, bx))
    iy = max(0.0, min(ay + ah, by + bh) - max(ay, by))
    inter = ix * iy
    if inter <= 0.0:
        return 0.0
    union = aw * ah + bw * bh - inter
    return inter / union


# ---------------------------------------------------------------------------
# matching


@dataclass(frozen=True)
class MatchResult:
    """Per-detection outcomes in confidence-descending order."""

    order: tuple[int, ...]       # detection indices, sorted for matching
    is_tp: tuple[bool, ...]      # aligned with ``order``
    matched_gt: tuple[int, ...]  # GT index per detection, -1 when FP
    n_gt: int

    @property
    def unmatched_gt(self) -> int:
        return self.n_gt - sum(1 for g in self.matched_gt if g >= 0)


def match_detections(dets, gts, iou_threshold: float = 0.5) -> MatchResult:
    """Greedy one-to-one matching for one image and one category.

    ``dets`` are Detections (or (bbox, confidence) pairs); ``gts`` are
    bboxes.  Sorted by confidence descending with ties broken by lower
    detection index; each detection takes the unmatched GT of highest
    IoU >= threshold, ties to the lower GT index.
    """
    boxes = []
    confs = []
    for d in dets:
        if isinstance(d, Detection):
            boxes.append(d.bbox)
            confs.append(d.confidence)
        else:
            boxes.append(tuple(d[0]))
            confs.append(float(d[1]))
    order = sorted(range(len(boxes)), key=lambda i: (-confs[i], i))
    taken = [False] * len(gts)
    is_tp = []
    matched = []
    for i in order:
        best_iou = 0.0
        best_j = -1
        for j, g in enumerate(gts):
            if taken[j]:
                continue
            v = iou(boxes[i], g)
            if v >= iou_threshold and v > best_iou:
                best_iou = v
                best_j = j
        if best_j >= 0:
            taken[best_j] = True
            is_tp.append(True)
            matched.append(best_j)
        else:
            is_tp.append(False)
            matched.append(-1)
    return MatchResult(order=tuple(order), is_tp=tuple(is_tp),
                       matched_gt=tuple(matched), n_gt=len(gts))


def average_precision(flags, n_gt: int) -> float:
    """All-points AP from TP/FP flags already sorted by confidence
    descending.  Zero ground truth is the caller's responsibility to
    exclude; here it yields 0.0."""
    if n_gt <= 0:
        return 0.0
    tp = 0
    fp = 0
    recalls = [0.0]
    precisions = [1.0]
    for flag in flags:
        if flag:
            tp += 1
        else:
            fp += 1
        recalls.append(tp / n_gt)
        precisions.append(tp / (tp + fp))
    # interpolate: precision at recall r = max precision at recall >= r
    ap = 0.0
    r = np.array(recalls)
    p = np.array(precisions)
    interp = np.maximum.accumulate(p[::-1])[::-1]
    for k in range(1, len(r)):
        ap += (r[k] - r[k - 1]) * interp[k]
    return float(ap)


# ---------------------------------------------------------------------------
# COCO input


def load_coco_gt(path: str | Path) -> dict:
    """Read a COCO detection ground-truth document with light
    structural validation."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read ground truth {path}: {exc}") from exc
    for key in ("images", "annotations", "categories"):
        if key not in doc or not isinstance(doc[key], list):
            raise FormatError(f"ground truth {path} lacks list field {key!r}")
    ids = [img["id"] for img in doc["images"]]
    if len(set(ids)) != len(ids):
        raise FormatError("duplicate image ids in ground truth")
    return doc


def load_predictions(path: str | Path) -> list[Detection]:
    """Read a COCO results-format array of predicted boxes."""
    try:
        arr = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read predictions {path}: {exc}") from exc
    if not isinstance(arr, list):
        raise FormatError(f"predictions {path} must be a JSON array")
    out = []
    for i, r in enumerate(arr):
        try:
            out.append(Detection(image_id=int(r["image_id"]),
                                 category_id=int(r["category_id"]),
                                 bbox=tuple(r["bbox"]),
                                 confidence=float(r["score"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"prediction entry {i} malformed: {exc}") from exc
    return out


# ---------------------------------------------------------------------------
# report


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    precision: float
    recall: float
    map50: float
    per_class_ap: dict[str, float]
    confusion: dict[str, int]          # tp/fp/tn/fn, positive = NOK
    image_count: int
    verdicts: tuple = ()               # per-image detail records

    def to_json(self) -> dict:
        return {"accuracy": self.accuracy, "precision": self.precision,
                "recall": self.recall, "map50": self.map50,
                "per_class_ap": dict(self.per_class_ap),
                "confusion": dict(self.confusion),
                "image_count": self.image_count,
                "verdicts": list(self.verdicts)}


def _image_verdict(counts: dict[str, int], rule: UseCaseRule):
    """(ok, type_class) from per-category counts of confident boxes."""
    for cat, need in rule.required.items():
        if counts.get(cat, 0) < need:
            return False, None
    if rule.type_label_categories:
        present = [c for c in rule.type_label_categories if counts.get(c, 0) > 0]
        total = sum(counts.get(c, 0) for c in rule.type_label_categories)
        if len(present) != 1 or total != 1:
            return False, None
        return True, present[0]
    return True, None


def usecase_verdicts(gt_doc: dict, predictions: list[Detection],
                     rule: UseCaseRule) -> list[dict]:
    """Per-image OK/NOK decisions for ground truth and predictions.

    Ground-truth verdicts come from annotation counts under the same
    rule (without confidences); predicted verdicts count detections at
    the rule's confidence threshold.
    """
    cat_name = {c["id"]: c["name"] for c in gt_doc["categories"]}
    image_ids = [img["id"] for img in gt_doc["images"]]
    known = set(image_ids)
    for d in predictions:
        if d.image_id not in known:
            raise FormatError(
                f"prediction references image id {d.image_id} absent from "
                f"ground truth")

    gt_counts = {i: {} for i in image_ids}
    for a in gt_doc["annotations"]:
        name = cat_name.get(a["category_id"])
        c = gt_counts[a["image_id"]]
        c[name] = c.get(name, 0) + 1
    det_counts = {i: {} for i in image_ids}
    for d in predictions:
        if d.confidence < rule.confidence_threshold:
            continue
        name = cat_name.get(d.category_id)
        c = det_counts[d.image_id]
        c[name] = c.get(name, 0) + 1

    out = []
    for i in image_ids:
        gt_ok, gt_type = _image_verdict(gt_counts[i], rule)
        pr_ok, pr_type = _image_verdict(det_counts[i], rule)
        correct = (gt_ok == pr_ok)
        if correct and gt_ok and rule.type_label_categories:
            correct = (gt_type == pr_type)
        out.append({"image_id": i, "gt_ok": gt_ok, "pred_ok": pr_ok,
                    "gt_type": gt_type, "pred_type": pr_type,
                    "correct": bool(correct)})
    return out


def evaluate(gt_doc: dict, predictions: list[Detection],
             rule: UseCaseRule, iou_threshold: float = 0.5) -> EvalReport:
    """Full harness: mAP@50, P/R at the verdict threshold, image-level
    accuracy and OK/NOK confusion."""
    cat_name = {c["id"]: c["name"] for c in gt_doc["categories"]}
    image_ids = [img["id"] for img in gt_doc["images"]]

    gt_by = {}
    for a in gt_doc["annotations"]:
        gt_by.setdefault((a["image_id"], a["category_id"]), []).append(
            tuple(a["bbox"]))
    det_by = {}
    for idx, d in enumerate(predictions):
        det_by.setdefault((d.image_id, d.category_id), []).append((idx, d))

    # mAP over classes with ground truth
    per_class_ap = {}
    for cid, cname in sorted(cat_name.items()):
        n_gt = sum(len(v) for (i, c), v in gt_by.items() if c == cid)
        if n_gt == 0:
            continue
        scored = []    # (confidence, image_id, det index, is_tp)
        for img in image_ids:
            dets = [d for _, d in det_by.get((img, cid), [])]
            gts = gt_by.get((img, cid), [])
            m = match_detections(dets, gts, iou_threshold)
            for pos, det_idx in enumerate(m.order):
                scored.append((-dets[det_idx].confidence, img, det_idx,
                               m.is_tp[pos]))
        scored.sort()
        per_class_ap[cname] = average_precision(
            [s[3] for s in scored], n_gt)
    map50 = (float(np.mean(list(per_class_ap.values())))
             if per_class_ap else 0.0)

    # detection-level P/R at the verdict threshold
    thr = rule.confidence_threshold
    tp = 0
    fp = 0
    n_gt_total = sum(len(v) for v in gt_by.values())
    for (img, cid), pairs in det_by.items():
        dets = [d for _, d in pairs if d.confidence >= thr]
        gts = gt_by.get((img, cid), [])
        m = match_detections(dets, gts, iou_threshold)
        tp += sum(m.is_tp)
        fp += sum(1 for f in m.is_tp if not f)
    precision = tp / (tp + fp) if (tp + fp) > 0 else 1.0
    recall = tp / n_gt_total if n_gt_total > 0 else 1.0

    verdicts = usecase_verdicts(gt_doc, predictions, rule)
    accuracy = (sum(v["correct"] for v in verdicts) / len(verdicts)
                if verdicts else 1.0)
    conf = {"tp": 0, "fp": 0, "tn": 0, "fn": 0}
    for v in verdicts:
        gt_nok = not v["gt_ok"]
        pred_nok = not v["pred_ok"]
        if gt_nok and pred_nok:
            conf["tp"] += 1
        elif not gt_nok and pred_nok:
            conf["fp"] += 1
        elif not gt_nok and not pred_nok:
            conf["tn"] += 1
        else:
            conf["fn"] += 1

    return EvalReport(accuracy=float(accuracy), precision=float(precision),
                      recall=float(recall), map50=map50,
                      per_class_ap=per_class_ap, confusion=conf,
                      image_count=len(image_ids), verdicts=tuple(verdicts))


def format_report(report: EvalReport, rule: UseCaseRule) -> str:
    """Human-readable table mirroring the A / P / R / mAP layout."""
    lines = []
    title = rule.name or "evaluation"
    lines.append(f"{title}: {report.image_count} images")
    lines.append(f"{'A':>8} {'P':>8} {'R':>8} {'mAP@50':>8}")
    lines.append(f"{report.accuracy:8.2f} {report.precision:8.2f} "
                 f"{report.recall:8.2f} {report.map50:8.2f}")
    if report.per_class_ap:
        lines.append("per-class AP:")
        for name, ap in sorted(report.per_class_ap.items()):
            lines.append(f"  {name:<24} {ap:6.3f}")
    c = report.confusion
    lines.append(f"verdicts (positive = NOK): TP={c['tp']} FP={c['fp']} "
                 f"TN={c['tn']} FN={c['fn']}")
    return "\n".join(lines)
