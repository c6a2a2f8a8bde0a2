"""Average precision and background-wise metric splitting.

Each detection and ground-truth box is assigned to the background class
(sky, tree, ground) holding the majority of its pixels in the frame's
segmentation map; metrics are then computed per background partition as
well as over the unsplit total. Backgrounds with no ground truth report
an absent value, never zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .calibration import DECEConfig, dece, detection_features
from .errors import ValidationError
from .geometry import match_to_gt
from .io_formats import (
    BG_GROUND,
    BG_NAMES,
    BG_SKY,
    BG_TREE,
    DetectionSet,
    GroundTruthSet,
    SegMapImage,
)
from .parallel import chunked_map
from .scoremap import rasterize_bounds

# majority ties resolve toward the hardest background first
_TIE_PRIORITY = (BG_TREE, BG_GROUND, BG_SKY)


@dataclass
class BgReport:
    """Per-metric value for the total and each background partition."""

    metrics: dict[str, dict[str, float | None]]
    skipped_frames: int  # frames dropped for lack of a segmentation map


def bg_of_box(bbox, seg: SegMapImage) -> int:
    """Majority background label under a box; ties break tree > ground > sky."""
    if hasattr(bbox, "x1"):
        x1, y1, x2, y2 = bbox.x1, bbox.y1, bbox.x2, bbox.y2
    else:
        x1, y1, x2, y2 = (float(v) for v in bbox)
    xs, xe, ys, ye = rasterize_bounds(x1, y1, x2, y2, seg.height, seg.width)
    if xs >= xe or ys >= ye:
        raise ValidationError(
            f"bg_of_box: empty rasterization for box ({x1}, {y1}, {x2}, {y2})"
        )
    counts = np.bincount(seg.labels[ys:ye, xs:xe].ravel(), minlength=3)
    best = int(counts.max())
    for label in _TIE_PRIORITY:
        if counts[label] == best:
            return label
    raise AssertionError("unreachable")


def split_by_bg(
    dets: DetectionSet, gts: GroundTruthSet, seg: SegMapImage
) -> dict[int, tuple[np.ndarray, np.ndarray]]:
    """Partition detection and GT indices by background label."""
    det_bg = np.array([bg_of_box(dets.boxes[i], seg) for i in range(len(dets))], dtype=int)
    gt_bg = np.array([bg_of_box(gts.boxes[i], seg) for i in range(len(gts))], dtype=int)
    return {
        label: (np.nonzero(det_bg == label)[0], np.nonzero(gt_bg == label)[0])
        for label in (BG_SKY, BG_TREE, BG_GROUND)
    }


def average_precision(
    frames: Sequence[tuple[DetectionSet, GroundTruthSet]],
    iou_thresh: float = 0.5,
    threads: int = 1,
) -> float | None:
    """AP at the given IoU threshold, pooled over frames.

    Area under the precision-recall curve with all-points interpolation
    (precision envelope is the running maximum from the right). Returns
    None when there is no ground truth, 0.0 when ground truth exists but
    nothing was matched. Score ties order by lower x1 then y1. Matching
    runs on a frame-level worker pool; results merge in frame order, so
    the value is independent of the thread count.
    """
    matches = chunked_map(
        lambda fr: match_to_gt(fr[0], fr[1], iou_thresh), frames, threads
    )
    scores_parts, tp_parts, x1_parts, y1_parts = [], [], [], []
    n_gt = 0
    for (dets, gts), match in zip(frames, matches):
        n_gt += len(gts)
        if len(dets):
            scores_parts.append(dets.scores)
            tp_parts.append(match.det_is_tp)
            x1_parts.append(dets.boxes[:, 0])
            y1_parts.append(dets.boxes[:, 1])
    if n_gt == 0:
        return None
    if not scores_parts:
        return 0.0
    scores = np.concatenate(scores_parts)
    tp = np.concatenate(tp_parts)
    order = np.lexsort(
        (
            np.arange(len(scores)),
            np.concatenate(y1_parts),
            np.concatenate(x1_parts),
            -scores,
        )
    )
    tp = tp[order]
    ctp = np.cumsum(tp.astype(np.int64))
    cfp = np.cumsum((~tp).astype(np.int64))
    recall = ctp / n_gt
    precision = ctp / (ctp + cfp)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    ap = 0.0
    prev = 0.0
    for i in np.nonzero(tp)[0]:  # recall advances exactly at TP steps
        ap += (recall[i] - prev) * envelope[i]
        prev = recall[i]
    return float(ap)


def _pooled_dece(
    frames: Sequence[tuple[DetectionSet, GroundTruthSet, int, int]],
    cfg: DECEConfig,
) -> float | None:
    feats_parts, tp_parts = [], []
    for dets, gts, width, height in frames:
        if len(dets) == 0:
            continue
        match = match_to_gt(dets, gts, cfg.iou_thresh)
        feats, tp = detection_features(dets, match, width, height)
        feats_parts.append(feats)
        tp_parts.append(tp)
    if not feats_parts:
        return None
    return dece(np.concatenate(feats_parts), np.concatenate(tp_parts), cfg).joint


def bg_report(
    frames: Sequence[tuple[str, DetectionSet, GroundTruthSet]],
    segs: Mapping[str, SegMapImage],
    metrics: Sequence[str] = ("ap", "dece"),
    iou_thresh: float = 0.5,
    dece_cfg: DECEConfig | None = None,
    threads: int = 1,
) -> BgReport:
    """Compute the selected metrics for the total and per-background splits.

    A frame without a segmentation map is excluded entirely (counted in
    skipped_frames) so that the total stays the union of the three splits.
    """
    for m in metrics:
        if m not in ("ap", "dece"):
            raise ValidationError(f"bg_report: unknown metric '{m}'")
    dece_cfg = dece_cfg or DECEConfig(iou_thresh=iou_thresh)
    kept = [(fid, d, g) for fid, d, g in frames if fid in segs]
    skipped = len(frames) - len(kept)

    total_pairs = []
    split_pairs: dict[int, list] = {BG_SKY: [], BG_TREE: [], BG_GROUND: []}
    for fid, dets, gts in kept:
        seg = segs[fid]
        total_pairs.append((dets, gts, seg.width, seg.height))
        parts = split_by_bg(dets, gts, seg)
        for label, (det_idx, gt_idx) in parts.items():
            split_pairs[label].append(
                (dets.select(det_idx), gts.select(gt_idx), seg.width, seg.height)
            )

    out: dict[str, dict[str, float | None]] = {}
    if "ap" in metrics:
        out["ap"] = {
            "total": average_precision(
                [(d, g) for d, g, _, _ in total_pairs], iou_thresh, threads
            )
        }
        for label in (BG_SKY, BG_TREE, BG_GROUND):
            out["ap"][BG_NAMES[label]] = average_precision(
                [(d, g) for d, g, _, _ in split_pairs[label]], iou_thresh, threads
            )
    if "dece" in metrics:
        out["dece"] = {"total": _pooled_dece(total_pairs, dece_cfg)}
        for label in (BG_SKY, BG_TREE, BG_GROUND):
            out["dece"][BG_NAMES[label]] = _pooled_dece(split_pairs[label], dece_cfg)
    return BgReport(metrics=out, skipped_frames=skipped)
