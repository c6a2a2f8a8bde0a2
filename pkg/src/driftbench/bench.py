"""Timing harness for the eval pipeline (matching + AP throughput).

Generates an in-memory synthetic corpus and measures greedy matching
plus pooled average precision, the budgeted hot path of `driftbench
eval`. Run as ``python -m driftbench.bench --detections 1000000``.
"""

from __future__ import annotations

import argparse
import time

from .bgmetrics import average_precision
from .synthgen import ScenarioConfig, generate


def build_corpus(n_detections: int, objects_per_frame: int = 50, seed: int = 7):
    """Synthetic (dets, gts) frame pairs totalling ~n_detections detections."""
    frames = max(1, n_detections // objects_per_frame)
    cfg = ScenarioConfig(
        seed=seed,
        frames=frames,
        width=256,
        height=256,
        classes=1,
        objects_per_frame=objects_per_frame,
        box_size=(8.0, 24.0),
        jitter_pos=1.5,
        jitter_score=0.15,
        passes=1,
    )
    ds = generate(cfg)
    gt_by_frame = {r.frame_id: r.boxes for r in ds.ground_truth}
    pairs = [(rec.detections, gt_by_frame[rec.frame_id]) for rec in ds.detections]
    total = sum(len(d) for d, _ in pairs)
    return pairs, total


def run_matching_ap(pairs, iou: float = 0.5, threads: int = 1):
    """Time matching + AP over prepared frame pairs; returns (ap, seconds)."""
    start = time.perf_counter()
    ap = average_precision(pairs, iou_thresh=iou, threads=threads)
    return ap, time.perf_counter() - start


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--detections", type=int, default=1_000_000)
    parser.add_argument("--threads", type=int, default=4)
    parser.add_argument("--iou", type=float, default=0.5)
    args = parser.parse_args(argv)

    gen_start = time.perf_counter()
    pairs, total = build_corpus(args.detections)
    gen_s = time.perf_counter() - gen_start
    ap, match_s = run_matching_ap(pairs, args.iou, args.threads)
    rate = total / match_s
    print(f"corpus: {total} detections over {len(pairs)} frames ({gen_s:.2f}s to generate)")
    print(f"matching + AP: {match_s:.2f}s -> {rate:,.0f} detections/s (AP={ap:.4f})")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
