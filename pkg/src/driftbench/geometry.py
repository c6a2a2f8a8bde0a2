"""Box geometry: IoU, NMS candidate sets, NMS, and detection-to-GT matching."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .io_formats import DetectionSet, GroundTruthSet


@dataclass(frozen=True)
class BBox:
    """Corner-format box in absolute pixels; must have positive area."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        if not all(np.isfinite(v) for v in (self.x1, self.y1, self.x2, self.y2)):
            raise ValidationError("bbox: non-finite coordinate")
        if self.x2 <= self.x1 or self.y2 <= self.y1:
            raise ValidationError(f"bbox: degenerate box {self}")

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)


@dataclass(frozen=True)
class NMSConfig:
    """Candidate-set thresholds: IoU overlap eps, minimum score delta."""

    iou_eps: float = 0.5
    score_delta: float = 0.05

    def __post_init__(self):
        if not (0.0 < self.iou_eps <= 1.0):
            raise ValidationError(f"nms config: iou_eps {self.iou_eps} outside (0,1]")
        if not (0.0 <= self.score_delta < 1.0):
            raise ValidationError(f"nms config: score_delta {self.score_delta} outside [0,1)")


@dataclass
class MatchResult:
    """Greedy matching outcome: per-detection TP flag and claimed GT index."""

    det_is_tp: np.ndarray  # (n_det,) bool
    det_matched_gt: np.ndarray  # (n_det,) int, -1 when unmatched
    gt_matched: np.ndarray  # (n_gt,) bool


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes; edge-only contact counts as 0."""
    ix = min(a.x2, b.x2) - max(a.x1, b.x1)
    iy = min(a.y2, b.y2) - max(a.y1, b.y1)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def iou_matrix(boxes_a: np.ndarray, boxes_b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between (n,4) and (m,4) corner-format box arrays."""
    a = np.asarray(boxes_a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(boxes_b, dtype=np.float64).reshape(-1, 4)
    if len(a) == 0 or len(b) == 0:
        return np.zeros((len(a), len(b)))
    ix = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    iy = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.clip(ix, 0.0, None) * np.clip(iy, 0.0, None)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    return np.where(inter > 0.0, inter / union, 0.0)


def score_order(dets: DetectionSet) -> np.ndarray:
    """Deterministic processing order: score desc, then x1, y1, input index."""
    idx = np.arange(len(dets))
    return np.lexsort((idx, dets.boxes[:, 1], dets.boxes[:, 0], -dets.scores))


def candidate_set(dets: DetectionSet, j: int, cfg: NMSConfig) -> set[int]:
    """Indices k != j with IoU >= eps, same class as j, and score >= delta."""
    if not (0 <= j < len(dets)):
        raise ValidationError(f"candidate_set: index {j} out of range for {len(dets)} detections")
    ious = iou_matrix(dets.boxes, dets.boxes[j : j + 1])[:, 0]
    keep = (
        (ious >= cfg.iou_eps)
        & (dets.classes == dets.classes[j])
        & (dets.scores >= cfg.score_delta)
    )
    keep[j] = False
    return set(int(k) for k in np.nonzero(keep)[0])


def nms(dets: DetectionSet, cfg: NMSConfig = NMSConfig()) -> DetectionSet:
    """Greedy per-class NMS: drop scores below delta, keep cluster maxima.

    Output is sorted by descending score (ties by lower x1, lower y1, input
    order); no two kept boxes of the same class overlap with IoU >= eps.
    """
    passing = np.nonzero(dets.scores >= cfg.score_delta)[0]
    if passing.size == 0:
        return DetectionSet.empty()
    sub = dets.select(passing)
    order = score_order(sub)
    ious = iou_matrix(sub.boxes, sub.boxes)
    suppressed = np.zeros(len(sub), dtype=bool)
    kept: list[int] = []
    for i in order:
        if suppressed[i]:
            continue
        kept.append(int(i))
        overlap = (ious[i] >= cfg.iou_eps) & (sub.classes == sub.classes[i])
        suppressed |= overlap
    return sub.select(kept)


def match_to_gt(
    dets: DetectionSet, gts: GroundTruthSet, iou_thresh: float = 0.5
) -> MatchResult:
    """Greedy one-to-one matching in score order (VOC-style).

    Each detection, processed in deterministic score order, claims the
    still-unmatched same-class GT with the highest IoU >= iou_thresh;
    everything else is a false positive. No GT is claimed twice.
    """
    n_det, n_gt = len(dets), len(gts)
    det_is_tp = np.zeros(n_det, dtype=bool)
    det_matched = np.full(n_det, -1, dtype=np.int64)
    gt_matched = np.zeros(n_gt, dtype=bool)
    if n_det == 0 or n_gt == 0:
        return MatchResult(det_is_tp, det_matched, gt_matched)
    # one vectorized IoU matrix, then a plain-list greedy loop: per-iteration
    # numpy calls would dominate the eval pipeline's matching budget
    iou_rows = iou_matrix(dets.boxes, gts.boxes).tolist()
    det_classes = dets.classes.tolist()
    gt_classes = gts.classes.tolist()
    gt_taken = [False] * n_gt
    for i in score_order(dets).tolist():
        row = iou_rows[i]
        cls = det_classes[i]
        best_g, best = -1, -1.0
        for g in range(n_gt):
            if gt_taken[g] or gt_classes[g] != cls:
                continue
            v = row[g]
            if v > best:  # strict: ties keep the lowest GT index
                best, best_g = v, g
        if best_g >= 0 and best >= iou_thresh:
            det_is_tp[i] = True
            det_matched[i] = best_g
            gt_taken[best_g] = True
    gt_matched[:] = gt_taken
    return MatchResult(det_is_tp, det_matched, gt_matched)
