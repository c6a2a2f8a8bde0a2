"""Desk-scale adversarial adaptation: pooled map features and a logistic
domain discriminator trained with a hand-derived gradient.

Uncertainty maps are pooled into fixed-length vectors (per-channel mean,
max, and grid-cell means); a logistic regressor over those vectors plays
the discriminator. The adversarial loss follows the standard convention:
the discriminator minimizes binary cross-entropy (source labeled 1), and
confusion between domains is what drives the loss up.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .synthgen import stream

PROB_CLAMP = 1e-7


@dataclass
class ToyDiscriminator:
    """Logistic regressor: probability that a pooled map is source-domain."""

    weights: np.ndarray
    bias: float

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if not (np.all(np.isfinite(self.weights)) and np.isfinite(self.bias)):
            raise ValidationError("discriminator: non-finite parameters")


@dataclass
class LossBreakdown:
    l_detection: float
    l_adv: float
    lam: float
    l_total: float


def pool(umap: np.ndarray, grid: int = 4) -> np.ndarray:
    """Pool an (H, W, 2) uncertainty map into a 2*(2 + grid^2) vector.

    Per channel: mean, max, then grid-cell means over a grid x grid
    partition of the image (remainder rows/columns go to the last cell).
    """
    if umap.size == 0:
        raise ValidationError("pool: empty map")
    if grid < 1:
        raise ValidationError(f"pool: grid must be >= 1, got {grid}")
    h, w, _ = umap.shape
    row_edges = [min(h, (h // grid) * i) for i in range(grid)] + [h]
    col_edges = [min(w, (w // grid) * i) for i in range(grid)] + [w]
    feats = []
    for ch in (0, 1):
        plane = umap[:, :, ch]
        feats.append(plane.mean())
        feats.append(plane.max())
        for r in range(grid):
            for c in range(grid):
                cell = plane[row_edges[r] : row_edges[r + 1], col_edges[c] : col_edges[c + 1]]
                feats.append(cell.mean() if cell.size else 0.0)
    return np.asarray(feats, dtype=np.float64)


def disc_forward(disc: ToyDiscriminator, features: np.ndarray) -> float:
    """Logistic output clamped away from {0, 1} so logs stay finite."""
    features = np.asarray(features, dtype=np.float64).reshape(-1)
    if features.shape != disc.weights.shape:
        raise ValidationError(
            f"disc_forward: feature dim {features.shape[0]} != weight dim "
            f"{disc.weights.shape[0]}"
        )
    z = float(disc.weights @ features + disc.bias)
    p = float(_stable_logistic(np.array([z]))[0])
    return min(max(p, PROB_CLAMP), 1.0 - PROB_CLAMP)


def _stable_logistic(z: np.ndarray) -> np.ndarray:
    # overflow-free: exp of a non-positive argument on both branches
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def disc_forward_batch(disc: ToyDiscriminator, feats: np.ndarray) -> np.ndarray:
    """Vectorized disc_forward over an (n, F) feature matrix."""
    z = feats @ disc.weights + disc.bias
    return np.clip(_stable_logistic(z), PROB_CLAMP, 1.0 - PROB_CLAMP)


def adv_loss(src_probs: Sequence[float], tgt_probs: Sequence[float]) -> float:
    """Adversarial loss: -E_src[log D] - E_tgt[log (1 - D)]."""
    src = np.asarray(src_probs, dtype=np.float64)
    tgt = np.asarray(tgt_probs, dtype=np.float64)
    if src.size == 0 or tgt.size == 0:
        raise ValidationError("adv_loss: need probabilities from both domains")
    if np.any((src <= 0) | (src >= 1)) or np.any((tgt <= 0) | (tgt >= 1)):
        raise ValidationError("adv_loss: probabilities must lie in (0, 1)")
    return float(-np.mean(np.log(src)) - np.mean(np.log(1.0 - tgt)))


def total_loss(l_detection: float, l_adv: float, lam: float) -> LossBreakdown:
    """Compose the total objective: detection loss minus lambda * adversarial."""
    if not all(np.isfinite(v) for v in (l_detection, l_adv, lam)):
        raise ValidationError("total_loss: non-finite input")
    if lam < 0:
        raise ValidationError("total_loss: lambda must be >= 0")
    return LossBreakdown(l_detection, l_adv, lam, l_detection - lam * l_adv)


def bce_loss(disc: ToyDiscriminator, feats: np.ndarray, labels: np.ndarray) -> float:
    """Mean binary cross-entropy of the discriminator on labeled features."""
    p = disc_forward_batch(disc, feats)
    y = np.asarray(labels, dtype=np.float64)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def bce_gradient(
    disc: ToyDiscriminator, feats: np.ndarray, labels: np.ndarray
) -> tuple[np.ndarray, float]:
    """Hand-derived BCE gradient: ((p - y) . f) / n and mean(p - y)."""
    p = disc_forward_batch(disc, feats)
    y = np.asarray(labels, dtype=np.float64)
    err = p - y
    return feats.T @ err / len(y), float(err.mean())


def train_discriminator(
    src_maps: Sequence[np.ndarray],
    tgt_maps: Sequence[np.ndarray],
    steps: int = 500,
    lr: float = 0.1,
    seed: int = 0,
    grid: int = 4,
) -> tuple[ToyDiscriminator, np.ndarray]:
    """Full-batch gradient descent on the discriminator's BCE.

    Source maps are labeled 1, target maps 0. Returns the trained
    discriminator and the per-step training-pool accuracy trace.
    Deterministic given (inputs, seed).
    """
    if len(src_maps) < 10 or len(tgt_maps) < 10:
        raise ValidationError("train: need >= 10 maps per domain")
    feats = np.stack([pool(m, grid) for m in src_maps] + [pool(m, grid) for m in tgt_maps])
    labels = np.concatenate([np.ones(len(src_maps)), np.zeros(len(tgt_maps))])
    rng = stream(seed, "uda-disc-init")
    disc = ToyDiscriminator(rng.normal(0.0, 0.01, feats.shape[1]), 0.0)
    trace = np.empty(steps)
    for step in range(steps):
        grad_w, grad_b = bce_gradient(disc, feats, labels)
        disc = ToyDiscriminator(disc.weights - lr * grad_w, disc.bias - lr * grad_b)
        p = disc_forward_batch(disc, feats)
        trace[step] = float(np.mean((p >= 0.5) == (labels == 1.0)))
    return disc, trace
