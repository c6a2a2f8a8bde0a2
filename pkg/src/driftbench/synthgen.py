"""Deterministic synthetic multi-domain fixtures.

Generates frames with banded segmentation maps (sky top, tree middle,
ground bottom), ground-truth boxes placed inside their band, and N
jittered detection passes with per-background miss rates and a false
positive process. Every random decision draws from its own
counter-based stream, keyed by (seed, purpose, frame, pass), so toggling
one knob (e.g. the tree miss rate) leaves every other draw bit-identical.

PRNG: numpy's Philox4x64 keyed with the 128-bit BLAKE2 digest of the
stream path, so fixtures are reproducible across platforms and
re-creatable from the documented key derivation alone.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .io_formats import (
    BG_GROUND,
    BG_NAMES,
    BG_SKY,
    BG_TREE,
    DetectionRecord,
    DetectionSet,
    FeatureVectorSet,
    GroundTruthRecord,
    GroundTruthSet,
    SegMapImage,
    write_detections,
    write_features,
    write_ground_truth,
    write_segmap,
)


def stream(seed: int, *path) -> np.random.Generator:
    """Independent Philox stream for one (seed, purpose) path."""
    token = "/".join([str(seed)] + [str(p) for p in path])
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=16).digest()
    return np.random.Generator(np.random.Philox(key=int.from_bytes(digest, "little")))


@dataclass(frozen=True)
class ScenarioConfig:
    """Knobs for one synthetic domain."""

    seed: int = 0
    frames: int = 4
    width: int = 64
    height: int = 64
    classes: int = 1
    objects_per_frame: int = 3
    bg_mix: tuple[float, float, float] = (0.4, 0.3, 0.3)  # sky, tree, ground
    box_size: tuple[float, float] = (8.0, 16.0)
    jitter_pos: float = 0.0  # std of corner jitter per pass, pixels
    jitter_score: float = 0.0
    miss_rate: tuple[float, float, float] = (0.0, 0.0, 0.0)  # per background
    fp_rate: float = 0.0
    passes: int = 1

    def __post_init__(self):
        if abs(sum(self.bg_mix) - 1.0) > 1e-9 or any(f < 0 for f in self.bg_mix):
            raise ValidationError(f"scenario: bg_mix {self.bg_mix} must be fractions summing to 1")
        for name, rate in zip(("sky", "tree", "ground"), self.miss_rate):
            if not (0.0 <= rate <= 1.0):
                raise ValidationError(f"scenario: {name} miss rate {rate} outside [0,1]")
        if not (0.0 <= self.fp_rate <= 1.0):
            raise ValidationError(f"scenario: fp_rate {self.fp_rate} outside [0,1]")
        if self.jitter_pos < 0 or self.jitter_score < 0:
            raise ValidationError("scenario: jitter must be >= 0")
        if self.frames < 1 or self.passes < 1 or self.classes < 1:
            raise ValidationError("scenario: frames, passes, and classes must be >= 1")
        if self.box_size[0] <= 1.0 or self.box_size[1] < self.box_size[0]:
            raise ValidationError(f"scenario: bad box size range {self.box_size}")


@dataclass
class SyntheticDataset:
    config: ScenarioConfig
    frame_ids: list[str]
    ground_truth: list[GroundTruthRecord]
    segmaps: dict[str, SegMapImage]
    detections: list[DetectionRecord]  # frames x passes, frame-major


@dataclass
class DomainBundle:
    domain_id: str
    dataset: SyntheticDataset
    features: FeatureVectorSet


def band_rows(cfg: ScenarioConfig) -> tuple[int, int]:
    """Row boundaries (sky_end, tree_end) of the three horizontal bands."""
    sky_end = int(round(cfg.height * cfg.bg_mix[0]))
    tree_end = sky_end + int(round(cfg.height * cfg.bg_mix[1]))
    return min(sky_end, cfg.height), min(tree_end, cfg.height)


def make_segmap(cfg: ScenarioConfig) -> SegMapImage:
    sky_end, tree_end = band_rows(cfg)
    labels = np.full((cfg.height, cfg.width), BG_GROUND, dtype=np.uint8)
    labels[:sky_end, :] = BG_SKY
    labels[sky_end:tree_end, :] = BG_TREE
    return SegMapImage(cfg.width, cfg.height, labels)


def _band_span(cfg: ScenarioConfig, label: int) -> tuple[int, int]:
    sky_end, tree_end = band_rows(cfg)
    return {
        BG_SKY: (0, sky_end),
        BG_TREE: (sky_end, tree_end),
        BG_GROUND: (tree_end, cfg.height),
    }[label]


def _frame_gt(cfg: ScenarioConfig, frame: int) -> tuple[GroundTruthSet, np.ndarray]:
    """Ground truth for one frame plus each object's background label."""
    rng = stream(cfg.seed, "gt", frame)
    n = cfg.objects_per_frame
    mix = np.cumsum(cfg.bg_mix)
    labels = np.minimum(np.searchsorted(mix, rng.random(n), side="right"), BG_GROUND)
    spans = np.array([_band_span(cfg, lb) for lb in (BG_SKY, BG_TREE, BG_GROUND)])
    heights = spans[:, 1] - spans[:, 0]
    if np.any(heights < 3):  # bands too thin to host a box fall back to the widest
        labels = np.where(heights[labels] < 3, int(np.argmax(heights)), labels)
    y0 = spans[labels, 0].astype(np.float64)
    y1 = spans[labels, 1].astype(np.float64)
    w = np.minimum(rng.uniform(cfg.box_size[0], cfg.box_size[1], n), cfg.width - 1.0)
    h = np.minimum(rng.uniform(cfg.box_size[0], cfg.box_size[1], n), (y1 - y0) - 1.0)
    x = rng.random(n) * (cfg.width - w)
    y = y0 + rng.random(n) * (y1 - h - y0)
    classes = rng.integers(cfg.classes, size=n)
    return (
        GroundTruthSet(np.stack([x, y, x + w, y + h], axis=1), classes),
        np.asarray(labels, dtype=int),
    )


def _frame_pass_detections(
    cfg: ScenarioConfig, frame: int, pass_id: int, gt: GroundTruthSet, gt_bg: np.ndarray
) -> DetectionSet:
    n = len(gt)
    rng = stream(cfg.seed, "det", frame, pass_id)
    # draw everything unconditionally so knob changes don't shift other draws
    corner_noise = rng.normal(0.0, 1.0, (n, 4))
    score_noise = rng.normal(0.0, 1.0, n)
    miss_u = rng.random(n)
    rates = np.array(cfg.miss_rate, dtype=np.float64)[gt_bg] if n else np.empty(0)
    keep = miss_u >= rates

    boxes = gt.boxes + cfg.jitter_pos * corner_noise
    boxes[:, 0] = np.clip(boxes[:, 0], 0.0, cfg.width - 2.0)
    boxes[:, 1] = np.clip(boxes[:, 1], 0.0, cfg.height - 2.0)
    boxes[:, 2] = np.clip(boxes[:, 2], boxes[:, 0] + 1.0, cfg.width)
    boxes[:, 3] = np.clip(boxes[:, 3], boxes[:, 1] + 1.0, cfg.height)
    scores = np.clip(1.0 + cfg.jitter_score * score_noise, 0.01, 1.0)

    frng = stream(cfg.seed, "fp", frame, pass_id)
    n_fp = int(frng.binomial(cfg.objects_per_frame, cfg.fp_rate))
    w = np.minimum(frng.uniform(cfg.box_size[0], cfg.box_size[1], n_fp), cfg.width - 1.0)
    h = np.minimum(frng.uniform(cfg.box_size[0], cfg.box_size[1], n_fp), cfg.height - 1.0)
    x = frng.random(n_fp) * (cfg.width - w)
    y = frng.random(n_fp) * (cfg.height - h)
    fp_boxes = np.stack([x, y, x + w, y + h], axis=1)
    fp_classes = frng.integers(cfg.classes, size=n_fp)
    fp_scores = frng.uniform(0.1, 0.8, n_fp)

    return DetectionSet(
        np.concatenate([boxes[keep], fp_boxes]),
        np.concatenate([gt.classes[keep], fp_classes]),
        np.concatenate([scores[keep], fp_scores]),
    )


def generate(cfg: ScenarioConfig) -> SyntheticDataset:
    """Generate a full synthetic domain; byte-identical for identical config."""
    frame_ids = [f"frame_{i:04d}" for i in range(cfg.frames)]
    seg = make_segmap(cfg)
    gt_records, det_records = [], []
    segmaps = {}
    for f, fid in enumerate(frame_ids):
        gt, gt_bg = _frame_gt(cfg, f)
        gt_records.append(GroundTruthRecord(fid, gt))
        segmaps[fid] = seg
        for m in range(cfg.passes):
            det_records.append(
                DetectionRecord(fid, m, _frame_pass_detections(cfg, f, m, gt, gt_bg))
            )
    return SyntheticDataset(cfg, frame_ids, gt_records, segmaps, det_records)


def shift_pair(
    cfg: ScenarioConfig,
    shift_knobs: Sequence[float],
    feature_dim: int = 64,
    feature_offset_scale: float = 0.5,
) -> tuple[DomainBundle, list[DomainBundle]]:
    """Source domain plus a ladder of targets with strictly growing shift.

    Each knob value adds corner jitter on top of the source configuration
    and offsets the Gaussian per-frame feature vectors by
    feature_offset_scale * knob, so both the uncertainty scalar and the
    feature-distribution KL grow along the ladder.
    """
    knobs = [float(k) for k in shift_knobs]
    if len(knobs) < 1 or any(b <= a for a, b in zip(knobs, knobs[1:])):
        raise ValidationError(f"shift ladder: knobs {knobs} must be strictly increasing")
    if any(k < 0 for k in knobs):
        raise ValidationError("shift ladder: knobs must be >= 0")

    def _features(domain_idx: int, offset: float, frame_ids: list[str]) -> FeatureVectorSet:
        rng = stream(cfg.seed, "features", domain_idx)
        vectors = rng.normal(offset, 1.0, (len(frame_ids), feature_dim))
        return FeatureVectorSet(
            f"domain_{domain_idx}", feature_dim, vectors.astype(np.float32), list(frame_ids)
        )

    src_ds = generate(cfg)
    source = DomainBundle("source", src_ds, _features(0, 0.0, src_ds.frame_ids))
    targets = []
    for i, knob in enumerate(knobs):
        tcfg = replace(cfg, jitter_pos=cfg.jitter_pos + knob)
        ds = generate(tcfg)
        targets.append(
            DomainBundle(
                f"target_{i}", ds, _features(i + 1, feature_offset_scale * knob, ds.frame_ids)
            )
        )
    return source, targets


def write_dataset(ds: SyntheticDataset, out_dir) -> None:
    """Write the io_formats files plus a manifest recording the scenario."""
    out = Path(out_dir)
    (out / "segmaps").mkdir(parents=True, exist_ok=True)
    write_detections(ds.detections, out / "detections.jsonl")
    write_ground_truth(ds.ground_truth, out / "ground_truth.jsonl")
    for fid, seg in ds.segmaps.items():
        write_segmap(seg, out / "segmaps" / f"{fid}.pgm")
    manifest = {"scenario": asdict(ds.config), "frames": ds.frame_ids}
    (out / "scenario.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
