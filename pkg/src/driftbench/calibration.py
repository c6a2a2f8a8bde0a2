"""Detection expected calibration error over multivariate bins.

Detections are binned by confidence score and by normalized box center
and size (cx, cy, w, h). Each dimension contributes a marginal D-ECE;
the joint D-ECE bins over the Cartesian product of all five dimensions.
A cell's gap is |precision - mean confidence|, weighted by its share of
the detections; empty cells contribute nothing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .geometry import MatchResult
from .io_formats import DetectionSet

DIMENSIONS = ("score", "cx", "cy", "w", "h")


@dataclass(frozen=True)
class DECEConfig:
    """Bin counts per dimension plus the IoU threshold used for TP labels."""

    score_bins: int = 10
    cx_bins: int = 5
    cy_bins: int = 5
    w_bins: int = 5
    h_bins: int = 5
    iou_thresh: float = 0.5

    def __post_init__(self):
        if min(self.bins) < 1:
            raise ValidationError("dece config: every bin count must be >= 1")

    @property
    def bins(self) -> tuple[int, int, int, int, int]:
        return (self.score_bins, self.cx_bins, self.cy_bins, self.w_bins, self.h_bins)

    @property
    def n_total(self) -> int:
        return int(np.prod(self.bins))


@dataclass
class DECEResult:
    per_dimension: dict[str, float]
    joint: float
    cell_index: np.ndarray  # (n_occupied, 5) multi-indices of occupied joint cells
    cell_count: np.ndarray
    cell_conf: np.ndarray
    cell_prec: np.ndarray
    n_detections: int
    clamped: int  # feature values clipped into [0, 1]


def detection_features(
    dets: DetectionSet, match: MatchResult, width: int, height: int
) -> tuple[np.ndarray, np.ndarray]:
    """(n, 5) feature matrix (score, cx, cy, w, h normalized) and TP flags."""
    b = dets.boxes
    feats = np.empty((len(dets), 5))
    feats[:, 0] = dets.scores
    feats[:, 1] = (b[:, 0] + b[:, 2]) / 2.0 / width
    feats[:, 2] = (b[:, 1] + b[:, 3]) / 2.0 / height
    feats[:, 3] = (b[:, 2] - b[:, 0]) / width
    feats[:, 4] = (b[:, 3] - b[:, 1]) / height
    return feats, match.det_is_tp.copy()


def _gap(counts: np.ndarray, conf_sums: np.ndarray, tp_sums: np.ndarray, total: int) -> float:
    # plain left-fold over ascending cell id so the oracle can reproduce it
    value = 0.0
    for n in np.nonzero(counts)[0]:
        conf = conf_sums[n] / counts[n]
        prec = tp_sums[n] / counts[n]
        value += (counts[n] / total) * abs(prec - conf)
    return value


def dece(features: np.ndarray, is_tp: np.ndarray, cfg: DECEConfig) -> DECEResult:
    """Marginal and joint D-ECE over equal-width bins.

    Args:
        features: (n, 5) matrix from detection_features, columns in
            DIMENSIONS order, values in [0, 1] (out-of-range values are
            clamped and counted).
        is_tp: (n,) TP flags from greedy matching.
        cfg: bin counts.
    """
    features = np.asarray(features, dtype=np.float64)
    is_tp = np.asarray(is_tp, dtype=bool)
    n = len(features)
    if n == 0:
        raise ValidationError("dece: zero detections")
    if features.shape != (n, 5) or len(is_tp) != n:
        raise ValidationError("dece: features must be (n, 5) with matching TP flags")
    clamped = int(np.count_nonzero((features < 0.0) | (features > 1.0)))
    feats = np.clip(features, 0.0, 1.0)
    scores = feats[:, 0]
    tp = is_tp.astype(np.float64)

    idx = []
    for k, nbins in enumerate(cfg.bins):
        # half-open equal-width bins; the last bin also takes v == 1
        idx.append(np.minimum((feats[:, k] * nbins).astype(np.int64), nbins - 1))

    per_dim: dict[str, float] = {}
    for k, name in enumerate(DIMENSIONS):
        nbins = cfg.bins[k]
        counts = np.bincount(idx[k], minlength=nbins)
        conf_sums = np.bincount(idx[k], weights=scores, minlength=nbins)
        tp_sums = np.bincount(idx[k], weights=tp, minlength=nbins)
        per_dim[name] = _gap(counts, conf_sums, tp_sums, n)

    joint_idx = np.ravel_multi_index(tuple(idx), cfg.bins)
    counts = np.bincount(joint_idx, minlength=cfg.n_total)
    conf_sums = np.bincount(joint_idx, weights=scores, minlength=cfg.n_total)
    tp_sums = np.bincount(joint_idx, weights=tp, minlength=cfg.n_total)
    joint = _gap(counts, conf_sums, tp_sums, n)

    occupied = np.nonzero(counts)[0]
    return DECEResult(
        per_dimension=per_dim,
        joint=joint,
        cell_index=np.stack(np.unravel_index(occupied, cfg.bins), axis=1),
        cell_count=counts[occupied],
        cell_conf=conf_sums[occupied] / counts[occupied],
        cell_prec=tp_sums[occupied] / counts[occupied],
        n_detections=n,
        clamped=clamped,
    )


def dece_oracle(features: np.ndarray, is_tp: np.ndarray, cfg: DECEConfig) -> DECEResult:
    """Reference D-ECE: naive per-detection cell assignment, dicts only.

    Must agree with dece() bit for bit; kept free of any bucketing
    optimization so the two routes stay independent.
    """
    features = np.asarray(features, dtype=np.float64)
    is_tp = np.asarray(is_tp, dtype=bool)
    n = len(features)
    if n == 0:
        raise ValidationError("dece: zero detections")
    clamped = 0
    rows = []
    for i in range(n):
        vals = []
        for k in range(5):
            v = float(features[i, k])
            if v < 0.0 or v > 1.0:
                clamped += 1
                v = min(max(v, 0.0), 1.0)
            vals.append(v)
        rows.append((vals, bool(is_tp[i])))

    def bin_of(v: float, nbins: int) -> int:
        return min(int(v * nbins), nbins - 1)

    per_dim: dict[str, float] = {}
    for k, name in enumerate(DIMENSIONS):
        cells: dict[int, list[float]] = {}
        for vals, tp in rows:
            c = cells.setdefault(bin_of(vals[k], cfg.bins[k]), [0, 0.0, 0.0])
            c[0] += 1
            c[1] += vals[0]
            c[2] += 1.0 if tp else 0.0
        value = 0.0
        for b in sorted(cells):
            count, conf_sum, tp_sum = cells[b]
            value += (count / n) * abs(tp_sum / count - conf_sum / count)
        per_dim[name] = value

    joint_cells: dict[tuple[int, ...], list[float]] = {}
    for vals, tp in rows:
        key = tuple(bin_of(vals[k], cfg.bins[k]) for k in range(5))
        c = joint_cells.setdefault(key, [0, 0.0, 0.0])
        c[0] += 1
        c[1] += vals[0]
        c[2] += 1.0 if tp else 0.0
    joint = 0.0
    keys = sorted(joint_cells)
    for key in keys:
        count, conf_sum, tp_sum = joint_cells[key]
        joint += (count / n) * abs(tp_sum / count - conf_sum / count)

    return DECEResult(
        per_dimension=per_dim,
        joint=joint,
        cell_index=np.array(keys, dtype=np.int64).reshape(-1, 5),
        cell_count=np.array([joint_cells[k][0] for k in keys]),
        cell_conf=np.array([joint_cells[k][1] / joint_cells[k][0] for k in keys]),
        cell_prec=np.array([joint_cells[k][2] / joint_cells[k][0] for k in keys]),
        n_detections=n,
        clamped=clamped,
    )
