"""Command-line entry point for the synthetic-dataset pipeline.

Subcommands:
  validate    check a campaign config and its scene, print the config digest
  render-one  reproduce a single campaign frame standalone
  generate    run (or resume) a full generation campaign
  relabel     re-export annotations from stored id maps under a new policy
  eval        score detections against ground truth under a use-case rule
  stats       print draw histograms for a config over simulated scenarios

All file outputs are UTF-8; exit status is 0 on success and nonzero with
a structured ``error:`` message otherwise.  The environment variable
``DRGEN_THREADS`` caps render worker count.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from .campaign import (CampaignConfig, frame_seed, load_campaign_config,
                       relabel_campaign, render_frame, resume_campaign,
                       run_campaign, write_frame, _prepare_scene)
from .errors import DrgenError
from .evalharness import (evaluate, format_report, load_coco_gt,
                          load_predictions, load_rule)
from .labeler import LabelPolicy
from .materials import generate_default_library
from .randomizer import (BackgroundMode, DistractorMode, list_pool,
                         sample_scenario)
from .scene import load_scene


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drgen",
        description="Domain-randomized synthetic dataset generation and "
                    "evaluation for industrial inspection detectors.")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("validate",
                       help="check a campaign config and scene, print digest")
    p.add_argument("--config", required=True, help="campaign config JSON")

    p = sub.add_parser("render-one",
                       help="reproduce one campaign frame standalone")
    p.add_argument("--config", required=True, help="campaign config JSON")
    p.add_argument("--frame", required=True, type=int,
                   help="frame index to render")
    p.add_argument("--out", required=True,
                   help="directory for the frame's artifacts")

    p = sub.add_parser("generate", help="run a full generation campaign")
    p.add_argument("--config", required=True, help="campaign config JSON")
    p.add_argument("--resume", action="store_true",
                   help="continue a partially generated campaign")

    p = sub.add_parser("relabel",
                       help="re-export annotations under a new label policy")
    p.add_argument("--config", required=True,
                   help="JSON with the new label policy (full campaign "
                        "config or bare policy object)")
    p.add_argument("--out", required=True, help="campaign output directory")

    p = sub.add_parser("eval",
                       help="score predictions against COCO ground truth")
    p.add_argument("--gt", required=True, help="COCO ground-truth JSON")
    p.add_argument("--pred", required=True, help="COCO results-format JSON")
    p.add_argument("--rule", required=True, help="use-case rule JSON")
    p.add_argument("--out", help="write the report JSON here")

    p = sub.add_parser("stats",
                       help="print draw histograms over simulated scenarios")
    p.add_argument("--config", required=True, help="campaign config JSON")
    p.add_argument("--samples", type=int, default=1000,
                   help="number of scenarios to simulate (default 1000)")
    return parser


# ---------------------------------------------------------------------------
# subcommand bodies


def _cmd_validate(args) -> int:
    config = load_campaign_config(args.config)
    load_scene(config.scene_path)
    missing = [p for p in config.randomization.hdri_pool
               if not Path(p).is_file()]
    rand = config.randomization
    if rand.background.mode is not BackgroundMode.HDRI_ONLY:
        list_pool(rand.background.image_dir, (".png", ".jpg", ".jpeg"))
    if rand.distractors.mode is DistractorMode.COMPLEX_MESH_POOL:
        list_pool(rand.distractors.mesh_dir, (".obj",))
    if missing:
        raise DrgenError("missing files: " + ", ".join(missing))
    print(f"config digest: {config.digest()}")
    print("ok")
    return 0


def _cmd_render_one(args) -> int:
    config = load_campaign_config(args.config)
    if not (0 <= args.frame < config.total_images):
        raise DrgenError(
            f"frame {args.frame} outside campaign range "
            f"[0, {config.total_images})")
    scene = _prepare_scene(config)
    frame = render_frame(config, scene, args.frame)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_frame(out, frame)
    record = frame["record"]
    print(f"frame {args.frame}: seed {record['frame_seed']:#018x} "
          f"split {record['split']}")
    print(f"wrote {out / record['image']}")
    return 0


def _cmd_generate(args) -> int:
    config = load_campaign_config(args.config)

    def progress(i, total):
        print(f"frame {i + 1}/{total}", file=sys.stderr)

    if args.resume:
        manifest = resume_campaign(config.output_dir, config)
    else:
        manifest = run_campaign(config, progress=progress)
    counts = manifest["split_counts"]
    print(f"generated {manifest['total_images']} frames "
          f"(train {counts['train']}, val {counts['val']}) "
          f"into {config.output_dir}")
    return 0


def _policy_from_file(path: str) -> LabelPolicy:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DrgenError(f"cannot read {path}: {exc}") from exc
    if isinstance(doc, dict) and "label_policy" in doc:
        doc = doc["label_policy"]
    if not isinstance(doc, dict):
        raise DrgenError(f"{path} holds no label policy object")
    return LabelPolicy(
        min_visible_pixels=doc.get("min_visible_pixels", 25),
        min_visibility_fraction=doc.get("min_visibility_fraction", 0.25))


def _cmd_relabel(args) -> int:
    policy = _policy_from_file(args.config)
    manifest = relabel_campaign(args.out, policy)
    print(f"re-exported annotations for {manifest['total_images']} frames "
          f"under policy (min_visible_pixels={policy.min_visible_pixels}, "
          f"min_visibility_fraction={policy.min_visibility_fraction})")
    return 0


def _cmd_eval(args) -> int:
    gt = load_coco_gt(args.gt)
    preds = load_predictions(args.pred)
    rule = load_rule(args.rule)
    report = evaluate(gt, preds, rule)
    print(format_report(report, rule))
    if args.out:
        Path(args.out).write_text(
            json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8")
    return 0


def _cmd_stats(args) -> int:
    config = load_campaign_config(args.config)
    if args.samples <= 0:
        raise DrgenError(f"--samples must be positive, got {args.samples}")
    scene = _prepare_scene(config)
    library = generate_default_library()
    entry_label = {spec: f"library[{i:03d}]"
                   for i, spec in enumerate(library.entries)}
    hdri_counts: dict[str, int] = {}
    material_counts: dict[str, int] = {}
    rot_bins = [0] * 12
    lo, hi = config.randomization.hdri_rotation
    for i in range(args.samples):
        s = sample_scenario(config.randomization, scene,
                            frame_seed(config.master_seed, i))
        name = Path(s.hdri_path).name
        hdri_counts[name] = hdri_counts.get(name, 0) + 1
        for _, mat in s.materials:
            r, g, b = mat.base_color
            label = entry_label.get(
                mat, f"rgb({r:.2f},{g:.2f},{b:.2f})")
            material_counts[label] = material_counts.get(label, 0) + 1
        span = hi - lo
        frac = ((s.hdri_rotation - lo) / span) if span > 0 else 0.0
        rot_bins[min(11, int(frac * 12))] += 1

    print(f"scenario statistics over {args.samples} samples")
    print("hdri draws:")
    for name in sorted(hdri_counts):
        print(f"  {name} {hdri_counts[name]}")
    print("material draws:")
    for name in sorted(material_counts):
        print(f"  {name} {material_counts[name]}")
    deg = math.degrees(hi - lo) / 12
    print(f"hdri rotation bins (12 x {deg:.1f} deg):")
    for k, c in enumerate(rot_bins):
        print(f"  [{k:2d}] {c}")
    return 0


_COMMANDS = {
    "validate": _cmd_validate,
    "render-one": _cmd_render_one,
    "generate": _cmd_generate,
    "relabel": _cmd_relabel,
    "eval": _cmd_eval,
    "stats": _cmd_stats,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.subcommand](args)
    except DrgenError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
