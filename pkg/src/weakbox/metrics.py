"""Evaluation: IoU, grounding recall@1, average precision, mAP."""

from dataclasses import dataclass, field

import numpy as np

from .core import BoxPx
from .errors import DataError


@dataclass(frozen=True)
class PrCurve:
    points: tuple  # of (recall, precision), recall non-decreasing
    ap: float


@dataclass
class GroundTruthSet:
    """Ground-truth boxes keyed by image id."""

    boxes: dict = field(default_factory=dict)  # image_id -> [(category_id, BoxPx)]

    def add(self, image_id, category_id, box):
        self.boxes.setdefault(image_id, []).append((category_id, box))

    def category_ids(self):
        return sorted({cid for anns in self.boxes.values() for cid, _ in anns})

    def count(self, category_id):
        return sum(1 for anns in self.boxes.values()
                   for cid, _ in anns if cid == category_id)


def iou(a, b):
    """Intersection over union of two half-open pixel boxes."""
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def union_box(boxes):
    """Smallest box covering all the given boxes."""
    if not boxes:
        raise DataError("cannot merge an empty box list")
    return BoxPx(
        min(b.x_min for b in boxes), min(b.y_min for b in boxes),
        max(b.x_max for b in boxes), max(b.y_max for b in boxes),
    )


def recall_at_1(predictions, iou_thresh=0.5, merge="union"):
    """Fraction of phrases whose predicted box hits the ground truth.

    `predictions` is a list of (predicted BoxPx, list of gt BoxPx). With
    merge="union" the gt boxes of a phrase are merged into their covering
    box before the IoU test; merge="any" scores a hit if any single gt box
    overlaps enough.
    """
    if not predictions:
        raise DataError("no phrases to score")
    hits = 0
    for pred, gt_boxes in predictions:
        if not gt_boxes:
            raise DataError("phrase with no ground-truth boxes")
        if merge == "union":
            hit = iou(pred, union_box(gt_boxes)) >= iou_thresh
        elif merge == "any":
            hit = any(iou(pred, g) >= iou_thresh for g in gt_boxes)
        else:
            raise ValueError(f"unknown merge mode {merge!r}")
        hits += bool(hit)
    return hits / len(predictions)


def _match_detections(detections, gt, class_id, iou_thresh):
    """Greedy confidence-ordered matching; returns TP flags in sorted order."""
    dets = sorted(
        (d for d in detections if d.category_id == class_id),
        key=lambda d: (-d.confidence, d.box.x_min),
    )
    matched = {img: [False] * len([1 for c, _ in anns if c == class_id])
               for img, anns in gt.boxes.items()}
    gt_by_image = {img: [b for c, b in anns if c == class_id]
                   for img, anns in gt.boxes.items()}
    tp_flags = []
    for det in dets:
        candidates = gt_by_image.get(det.image_id, [])
        best, best_iou = None, iou_thresh
        for j, box in enumerate(candidates):
            if matched[det.image_id][j]:
                continue
            overlap = iou(det.box, box)
            if overlap >= best_iou:
                best, best_iou = j, overlap
        if best is not None:
            matched[det.image_id][best] = True
            tp_flags.append(True)
        else:
            tp_flags.append(False)
    return tp_flags


def average_precision(detections, gt, class_id, iou_thresh=0.5):
    """All-point interpolated AP for one class at one IoU threshold.

    AP is the exact area under the precision envelope
    envelope(r) = max precision over recalls >= r.
    """
    n_gt = gt.count(class_id)
    if n_gt == 0:
        raise DataError(f"class {class_id} absent from ground truth")
    tp_flags = _match_detections(detections, gt, class_id, iou_thresh)
    if not tp_flags:
        return PrCurve(points=(), ap=0.0)
    tp = np.cumsum(tp_flags)
    fp = np.cumsum([not f for f in tp_flags])
    recall = tp / n_gt
    precision = tp / (tp + fp)

    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    prev_r = 0.0
    ap = 0.0
    for r, p in zip(recall, envelope):
        ap += (r - prev_r) * p
        prev_r = r
    return PrCurve(points=tuple(zip(recall.tolist(), precision.tolist())),
                   ap=float(ap))


IOU_RANGE = tuple(np.round(np.arange(0.50, 0.96, 0.05), 2))


def mean_ap(detections, gt, iou_thresh=0.5):
    """Mean per-class AP over classes present in the ground truth."""
    classes = gt.category_ids()
    if not classes:
        raise DataError("empty ground truth")
    aps = [average_precision(detections, gt, c, iou_thresh).ap for c in classes]
    return float(np.mean(aps))


def map_range(detections, gt):
    """(mAP at IoU 0.5, mAP averaged over IoU 0.50..0.95 step 0.05)."""
    map50 = mean_ap(detections, gt, 0.5)
    map5095 = float(np.mean([mean_ap(detections, gt, t) for t in IOU_RANGE]))
    return map50, map5095
