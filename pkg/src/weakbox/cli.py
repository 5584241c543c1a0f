"""Command-line surface: synth, detect, ground, eval, pseudo-label, render."""

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .bundle_io import read_bundle, write_bundle
from .core import BoxPx, Detection, PipelineConfig
from .errors import DataError, FormatError, WeakboxError
from .metrics import GroundTruthSet, map_range, mean_ap, recall_at_1
from .pipeline import (Lexicon, PhraseQuery, detect_categories, expand_token,
                       ground_phrase, nms_pseudo_labels)
from .render import render_overlay
from .segment import compute_threshold, extract_box, threshold_heatmap
from .synth import SynthSpec, generate_synthetic_bundle, random_spec

BUNDLE_SUFFIX = ".wsab"

DEFAULT_CATEGORIES = (
    "person", "dog", "cat", "car", "boat", "bird", "horse", "frisbee",
    "ball", "chair", "bottle", "plant",
)


def _box_to_xywh(box):
    return [box.x_min, box.y_min, box.x_max - box.x_min, box.y_max - box.y_min]


def _box_from_xywh(xywh):
    x, y, w, h = xywh
    return BoxPx(x, y, x + w, y + h)


def load_lexicon(path):
    with open(path, "r", encoding="utf-8") as f:
        entries = json.load(f)
    return Lexicon(categories=tuple(
        (e["id"], e["name"], tuple(e["aliases"])) for e in entries
    ))


def load_config(path):
    if path is None:
        return PipelineConfig()
    with open(path, "r", encoding="utf-8") as f:
        return PipelineConfig.from_dict(json.load(f))


def load_gt(path):
    with open(path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    gt = GroundTruthSet()
    for img in doc.get("images", []):
        gt.boxes.setdefault(str(img["id"]), [])
    for ann in doc["annotations"]:
        gt.add(str(ann["image_id"]), ann["category_id"], _box_from_xywh(ann["bbox"]))
    return gt


def load_predictions(path):
    with open(path, "r", encoding="utf-8") as f:
        records = json.load(f)
    return [
        Detection(box=_box_from_xywh(r["bbox"]), category_id=r["category_id"],
                  confidence=r["score"], image_id=str(r["image_id"]))
        for r in records
    ]


def dump_predictions(dets, path):
    dets = sorted(dets, key=lambda d: (d.image_id, d.category_id, -d.confidence))
    records = [
        {"image_id": d.image_id, "category_id": d.category_id,
         "bbox": _box_to_xywh(d.box), "score": d.confidence}
        for d in dets
    ]
    with open(path, "w", encoding="utf-8") as f:
        json.dump(records, f, indent=1, sort_keys=True)
        f.write("\n")


def _bundle_paths(directory):
    paths = sorted(Path(directory).glob(f"*{BUNDLE_SUFFIX}"))
    if not paths:
        raise DataError(f"no {BUNDLE_SUFFIX} files in {directory}")
    return paths


def _detect_one(args):
    path_str, lexicon, cfg = args
    path = Path(path_str)
    bundle = read_bundle(path)
    return detect_categories(bundle, lexicon, cfg, image_id=path.stem)


def cmd_synth(args):
    with open(args.spec, "r", encoding="utf-8") as f:
        doc = json.load(f)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if "specs" in doc:
        specs = [SynthSpec(
            grid_h=s["grid_h"], grid_w=s["grid_w"],
            patch_size=s.get("patch_size", 16), d_vit=s.get("d_vit", 32),
            objects=tuple((o[0], tuple(o[1])) for o in s["objects"]),
            noise_sigma=s.get("noise_sigma", 0.0), rng_seed=s.get("rng_seed", 0),
        ) for s in doc["specs"]]
    else:
        count = doc["count"]
        seed = doc.get("seed", 0)
        categories = doc.get("categories", list(DEFAULT_CATEGORIES))
        specs = [random_spec(seed * 100003 + i, categories) for i in range(count)]

    names = sorted({name for s in specs for name, _ in s.objects})
    name_to_id = {n: i + 1 for i, n in enumerate(names)}
    images, annotations = [], []
    for i, spec in enumerate(specs):
        bundle, gt_boxes = generate_synthetic_bundle(spec)
        image_id = f"synth_{i:04d}"
        write_bundle(bundle, out / f"{image_id}{BUNDLE_SUFFIX}")
        images.append({"id": image_id, "width": bundle.geometry.image_w,
                       "height": bundle.geometry.image_h})
        for name, box in gt_boxes:
            annotations.append({"image_id": image_id,
                                "category_id": name_to_id[name],
                                "bbox": _box_to_xywh(box)})
    gt_doc = {
        "images": images,
        "annotations": annotations,
        "categories": [{"id": cid, "name": n} for n, cid in name_to_id.items()],
    }
    with open(out / "gt.json", "w", encoding="utf-8") as f:
        json.dump(gt_doc, f, indent=1, sort_keys=True)
        f.write("\n")
    lexicon = [{"id": cid, "name": n, "aliases": [n]} for n, cid in name_to_id.items()]
    with open(out / "lexicon.json", "w", encoding="utf-8") as f:
        json.dump(lexicon, f, indent=1, sort_keys=True)
        f.write("\n")
    return 0


def cmd_detect(args):
    lexicon = load_lexicon(args.lexicon)
    cfg = load_config(args.config)
    paths = _bundle_paths(args.bundles)
    jobs = [(str(p), lexicon, cfg) for p in paths]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            per_bundle = list(pool.map(_detect_one, jobs))
    else:
        per_bundle = [_detect_one(j) for j in jobs]
    detections = [d for dets in per_bundle for d in dets]
    dump_predictions(detections, args.out)
    return 0


def cmd_ground(args):
    cfg = load_config(args.config)
    bundles_dir = Path(args.bundles)
    records_out = []
    bundle_cache = {}
    with open(args.phrases, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            name = rec["bundle"]
            if name not in bundle_cache:
                bundle_cache[name] = read_bundle(bundles_dir / name)
            query = PhraseQuery(token_indices=tuple(rec["token_indices"]),
                                phrase_text=rec["phrase"])
            box, _ = ground_phrase(bundle_cache[name], query, cfg)
            records_out.append({"bundle": name, "phrase": rec["phrase"],
                                "bbox": _box_to_xywh(box)})
    with open(args.out, "w", encoding="utf-8") as f:
        for rec in records_out:
            f.write(json.dumps(rec, sort_keys=True) + "\n")
    return 0


def _read_jsonl(path):
    with open(path, "r", encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


def cmd_eval_grounding(args):
    preds = _read_jsonl(args.pred)
    gts = _read_jsonl(args.gt)
    if len(preds) != len(gts):
        raise DataError("prediction and ground-truth phrase counts differ")
    pairs = []
    for p, g in zip(preds, gts):
        if (p["bundle"], p["phrase"]) != (g["bundle"], g["phrase"]):
            raise DataError("prediction/ground-truth records out of order")
        pairs.append((_box_from_xywh(p["bbox"]),
                      [_box_from_xywh(b) for b in g["gt_boxes"]]))
    merge = "any" if args.any_box else "union"
    score = recall_at_1(pairs, merge=merge)
    print(json.dumps({"recall_at_1": score}, sort_keys=True))
    return 0


def cmd_eval_det(args):
    gt = load_gt(args.gt)
    dets = load_predictions(args.pred)
    if args.range:
        map50, map5095 = map_range(dets, gt)
        print(json.dumps({"mAP50": map50, "mAP50_95": map5095}, sort_keys=True))
    else:
        print(json.dumps({"mAP50": mean_ap(dets, gt, args.iou)}, sort_keys=True))
    return 0


def cmd_pseudo_label(args):
    dets = load_predictions(args.pred)
    kept = nms_pseudo_labels(dets, args.conf, args.iou)
    dump_predictions(kept, args.out)
    return 0


def cmd_render(args):
    bundle = read_bundle(args.bundle)
    cfg = load_config(args.config)
    if not 0 <= args.token < len(bundle.tokens):
        raise DataError(f"token index {args.token} outside bundle")
    heat, seed, _ = expand_token(bundle, args.token, cfg)
    result = compute_threshold(heat, cfg)
    mask = threshold_heatmap(heat, result.t)
    box = extract_box(mask, seed, bundle.geometry)
    render_overlay(bundle, heat, [box], args.out)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="weakbox",
                                     description="Caption-driven weak box annotation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic bundle corpus")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("detect", help="caption-driven detection over bundles")
    p.add_argument("--bundles", required=True)
    p.add_argument("--lexicon", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("ground", help="phrase grounding over bundles")
    p.add_argument("--bundles", required=True)
    p.add_argument("--phrases", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_ground)

    p = sub.add_parser("eval-grounding", help="recall@1 for grounding output")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--any-box", action="store_true")
    p.set_defaults(func=cmd_eval_grounding)

    p = sub.add_parser("eval-det", help="mAP for detection output")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--range", action="store_true")
    p.set_defaults(func=cmd_eval_det)

    p = sub.add_parser("pseudo-label", help="confidence gate + per-class NMS")
    p.add_argument("--pred", required=True)
    p.add_argument("--conf", type=float, default=0.2)
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pseudo_label)

    p = sub.add_parser("render", help="render heatmap overlay for one token")
    p.add_argument("--bundle", required=True)
    p.add_argument("--token", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_render)

    return parser


def cli_main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (FormatError, DataError, WeakboxError, OSError,
            json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
