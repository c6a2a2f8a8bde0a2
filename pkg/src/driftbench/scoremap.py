"""Pixel-wise score maps and the entropy/std uncertainty map.

A score map is an (H, W, C+1) tensor: every detection adds its score to
its class channel and (1 - score) to the trailing background channel for
each covered pixel, untouched pixels become one-hot background, and each
pixel is then softmax-normalized. Across dropout passes the per-pixel
mean and population standard deviation yield the uncertainty map:
channel 0 is the entropy of the mean map, channel 1 the channel-summed
standard deviation.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .io_formats import DetectionSet, write_pgm16

DUMP_SCALE = 10000  # fixed-point factor for 16-bit map dumps


def rasterize_bounds(
    x1: float, y1: float, x2: float, y2: float, height: int, width: int
) -> tuple[int, int, int, int]:
    """Half-open integer coverage clamped to the image: (xs, xe, ys, ye).

    Pixel (x, y) is covered iff x1 <= x < x2 and y1 <= y < y2; the range
    may be empty after clamping.
    """
    xs = max(0, int(np.ceil(x1)))
    ys = max(0, int(np.ceil(y1)))
    xe = min(width, int(np.ceil(x2)))
    ye = min(height, int(np.ceil(y2)))
    return xs, max(xs, xe), ys, max(ys, ye)


def rasterize(bbox, height: int, width: int) -> set[tuple[int, int]]:
    """Set of integer pixel coordinates (x, y) covered by a corner-format box."""
    if hasattr(bbox, "x1"):
        x1, y1, x2, y2 = bbox.x1, bbox.y1, bbox.x2, bbox.y2
    else:
        x1, y1, x2, y2 = (float(v) for v in bbox)
    xs, xe, ys, ye = rasterize_bounds(x1, y1, x2, y2, height, width)
    return {(x, y) for y in range(ys, ye) for x in range(xs, xe)}


def _softmax_pixels(raw: np.ndarray) -> np.ndarray:
    shifted = raw - raw.max(axis=2, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=2, keepdims=True)


def build_score_map(
    dets: DetectionSet, height: int, width: int, num_classes: int
) -> np.ndarray:
    """Accumulate one pass's detections into a softmax-normalized score map.

    Args:
        dets: detections of a single frame/pass.
        height, width: image dimensions in pixels.
        num_classes: number of foreground classes C; the map has C+1
            channels with the background last.

    Returns:
        (height, width, num_classes + 1) float64 array; every pixel is a
        probability simplex.
    """
    if num_classes < 1:
        raise ValidationError("score map: need at least one class")
    if height < 1 or width < 1:
        raise ValidationError("score map: empty image")
    raw = np.zeros((height, width, num_classes + 1))
    for i in range(len(dets)):
        x1, y1, x2, y2 = dets.boxes[i]
        if x1 >= width or x2 <= 0 or y1 >= height or y2 <= 0:
            raise ValidationError(
                f"score map: box {i} ({x1}, {y1}, {x2}, {y2}) lies fully outside "
                f"the {width}x{height} image"
            )
        c = int(dets.classes[i])
        if c >= num_classes:
            raise ValidationError(f"score map: box {i} has class {c} >= C={num_classes}")
        xs, xe, ys, ye = rasterize_bounds(x1, y1, x2, y2, height, width)
        s = dets.scores[i]
        raw[ys:ye, xs:xe, c] += s
        raw[ys:ye, xs:xe, num_classes] += 1.0 - s
    untouched = np.all(raw == 0.0, axis=2)
    raw[untouched, num_classes] = 1.0
    return _softmax_pixels(raw)


def aggregate_passes(maps: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Element-wise mean and population std over N >= 2 per-pass score maps."""
    if len(maps) < 2:
        raise ValidationError(f"aggregate: need >= 2 passes, got {len(maps)}")
    shape = maps[0].shape
    for i, m in enumerate(maps):
        if m.shape != shape:
            raise ValidationError(f"aggregate: pass {i} shape {m.shape} != {shape}")
    stack = np.stack(maps)
    # std on a shifted basis: variance is shift-invariant, and identical
    # passes must yield exactly zero
    return stack.mean(axis=0), (stack - stack[0]).std(axis=0)


def entropy_map(mean_map: np.ndarray) -> np.ndarray:
    """Per-pixel natural-log entropy of a simplex-valued map; 0*log(0) = 0."""
    if np.any(mean_map < 0.0):
        raise ValidationError("entropy: negative channel value")
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(mean_map > 0.0, mean_map * np.log(mean_map), 0.0)
    return -terms.sum(axis=2)


def mcdo_map(maps: Sequence[np.ndarray]) -> np.ndarray:
    """Uncertainty map (H, W, 2): entropy of the mean, channel-summed std."""
    mean, std = aggregate_passes(maps)
    return np.stack([entropy_map(mean), std.sum(axis=2)], axis=2)


def mcdo_map_scalar(umap: np.ndarray) -> float:
    """Frame-level scalar: pixel mean of (entropy + summed std)."""
    if umap.size == 0:
        raise ValidationError("uncertainty map: empty map")
    return float(np.mean(umap[:, :, 0] + umap[:, :, 1]))


def dataset_scalar(frame_scalars: Sequence[float]) -> float:
    """Dataset-level scalar: mean of the per-frame scalars."""
    if len(frame_scalars) == 0:
        raise ValidationError("uncertainty scalar: no frames")
    return float(np.mean(np.asarray(frame_scalars, dtype=np.float64)))


def dump_uncertainty_map(umap: np.ndarray, out_dir, stem: str, scale: int = DUMP_SCALE):
    """Dump the two channels as 16-bit PGMs plus a sidecar with the scale.

    Values are multiplied by the fixed-point factor and clipped to the
    16-bit range; the sidecar records the factor and how many samples
    clipped so the dump is invertible up to that loss.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    clipped = 0
    for ch, name in ((0, "entropy"), (1, "std")):
        scaled = np.rint(umap[:, :, ch] * scale)
        clipped += int(np.count_nonzero(scaled > 65535))
        path = out / f"{stem}_{name}.pgm"
        write_pgm16(np.clip(scaled, 0, 65535).astype(np.uint16), path)
        paths[name] = path.name
    sidecar = out / f"{stem}_maps.json"
    sidecar.write_text(
        json.dumps(
            {"scale": scale, "channels": paths, "clipped": clipped}, sort_keys=True
        )
        + "\n",
        encoding="utf-8",
    )
    return sidecar
