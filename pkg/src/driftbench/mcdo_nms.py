"""Cross-pass detection association and per-list uncertainty (MCDO-NMS).

Detections from repeated dropout passes are greedily associated into
lists by IoU against a running-mean representative box; each list yields
a localization std (root mean of summed squared box residuals) and the
entropy of the mean classification probability vector. Aggregates are
cardinality-weighted and reported for all lists and for the TP/FP splits.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .geometry import MatchResult, iou_matrix, match_to_gt
from .io_formats import DetectionSet, GroundTruthSet


@dataclass
class AssociationList:
    """Detections of one object across passes; at most one member per pass."""

    class_id: int
    boxes: list[np.ndarray] = field(default_factory=list)
    scores: list[float] = field(default_factory=list)
    members: list[tuple[int, int]] = field(default_factory=list)  # (pass_id, det index)

    @property
    def cardinality(self) -> int:
        return len(self.members)

    @property
    def representative(self) -> np.ndarray:
        """Running mean box over the members joined so far."""
        return np.mean(np.stack(self.boxes), axis=0)

    def add(self, pass_id: int, det_index: int, box: np.ndarray, score: float) -> None:
        self.boxes.append(np.asarray(box, dtype=np.float64))
        self.scores.append(float(score))
        self.members.append((pass_id, det_index))


@dataclass
class McdoNmsResult:
    """Per-list values plus cardinality-weighted aggregates.

    Aggregates are None for empty subsets (absent, not zero).
    """

    sigma_loc: np.ndarray  # (n_lists,)
    entropy_cls: np.ndarray  # (n_lists,)
    cardinalities: np.ndarray  # (n_lists,)
    is_tp: np.ndarray  # (n_lists,) bool
    loc_total: float | None
    loc_tp: float | None
    loc_fp: float | None
    cls_total: float | None
    cls_tp: float | None
    cls_fp: float | None


def associate_passes(
    passes: Sequence[DetectionSet], iou_assoc: float = 0.5
) -> list[AssociationList]:
    """Greedily associate detections across passes into lists.

    Lists are seeded from pass 0. For each later pass, (detection, list)
    pairs with matching class and IoU >= iou_assoc against the list
    representative are assigned in descending-IoU order, one detection
    per pass per list; leftovers seed new lists. Ties break on lower
    detection index, then lower list index.
    """
    if len(passes) < 2:
        raise ValidationError(f"associate: need >= 2 passes, got {len(passes)}")
    if not (0.0 < iou_assoc <= 1.0):
        raise ValidationError(f"associate: iou_assoc {iou_assoc} outside (0,1]")
    lists: list[AssociationList] = []
    for i in range(len(passes[0])):
        lst = AssociationList(class_id=int(passes[0].classes[i]))
        lst.add(0, i, passes[0].boxes[i], passes[0].scores[i])
        lists.append(lst)
    for pass_id in range(1, len(passes)):
        dets = passes[pass_id]
        if len(dets) == 0:
            continue
        if lists:
            reps = np.stack([lst.representative for lst in lists])
            ious = iou_matrix(dets.boxes, reps)
            pairs = [
                (float(ious[d, q]), d, q)
                for d in range(len(dets))
                for q in range(len(lists))
                if ious[d, q] >= iou_assoc and lists[q].class_id == int(dets.classes[d])
            ]
            pairs.sort(key=lambda p: (-p[0], p[1], p[2]))
        else:
            pairs = []
        det_taken = np.zeros(len(dets), dtype=bool)
        list_taken = np.zeros(len(lists), dtype=bool)
        for _, d, q in pairs:
            if det_taken[d] or list_taken[q]:
                continue
            lists[q].add(pass_id, d, dets.boxes[d], dets.scores[d])
            det_taken[d] = True
            list_taken[q] = True
        for d in np.nonzero(~det_taken)[0]:
            lst = AssociationList(class_id=int(dets.classes[d]))
            lst.add(pass_id, int(d), dets.boxes[d], dets.scores[d])
            lists.append(lst)
    return lists


def list_uncertainty(lst: AssociationList) -> tuple[float, float]:
    """Per-list (sigma_loc, entropy_cls).

    sigma_loc is the square root of the mean (over members) of the summed
    squared residuals of the four box parameters from the member mean.
    entropy_cls is the natural-log entropy of the mean classification
    probability vector, where each member contributes its score on the
    predicted class and the remainder on the background channel.
    """
    # residuals on a shifted basis so identical members give exactly zero
    boxes = np.stack(lst.boxes)
    shifted = boxes - boxes[0]
    residuals = shifted - shifted.mean(axis=0)
    sigma = float(np.sqrt(np.mean(np.sum(residuals**2, axis=1))))
    s_mean = float(np.mean(lst.scores))
    entropy = 0.0
    for p in (s_mean, 1.0 - s_mean):
        if p > 0.0:
            entropy -= p * np.log(p)
    return sigma, float(entropy)


def label_lists(
    lists: Sequence[AssociationList], gts: GroundTruthSet, iou_thresh: float = 0.5
) -> np.ndarray:
    """TP/FP flag per list by matching representatives against ground truth."""
    if not lists:
        return np.zeros(0, dtype=bool)
    reps = DetectionSet(
        np.stack([lst.representative for lst in lists]),
        np.array([lst.class_id for lst in lists], dtype=np.int64),
        np.array([np.mean(lst.scores) for lst in lists]),
        validate=False,
    )
    match: MatchResult = match_to_gt(reps, gts, iou_thresh)
    return match.det_is_tp


def aggregate(lists: Sequence[AssociationList], is_tp: np.ndarray) -> McdoNmsResult:
    """Cardinality-weighted aggregates over all lists and the TP/FP splits.

    Classification aggregates are weighted means of the per-list entropies;
    localization aggregates are the square root of the weighted mean of the
    per-list variances.
    """
    if len(lists) != len(is_tp):
        raise ValidationError("aggregate: TP labels do not match list count")
    sig = np.empty(len(lists))
    ent = np.empty(len(lists))
    for i, lst in enumerate(lists):
        sig[i], ent[i] = list_uncertainty(lst)
    card = np.array([lst.cardinality for lst in lists], dtype=np.float64)
    is_tp = np.asarray(is_tp, dtype=bool)

    def _loc(mask) -> float | None:
        if not np.any(mask):
            return None
        w = card[mask]
        return float(np.sqrt(np.sum(w * sig[mask] ** 2) / np.sum(w)))

    def _cls(mask) -> float | None:
        if not np.any(mask):
            return None
        w = card[mask]
        return float(np.sum(w * ent[mask]) / np.sum(w))

    every = np.ones(len(lists), dtype=bool)
    return McdoNmsResult(
        sigma_loc=sig,
        entropy_cls=ent,
        cardinalities=card,
        is_tp=is_tp,
        loc_total=_loc(every),
        loc_tp=_loc(is_tp),
        loc_fp=_loc(~is_tp),
        cls_total=_cls(every),
        cls_tp=_cls(is_tp),
        cls_fp=_cls(~is_tp),
    )
