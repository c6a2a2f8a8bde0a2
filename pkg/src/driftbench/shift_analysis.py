"""Cross-domain shift analysis: normalization, Pearson, histograms, KL.

Metric series are normalized against a source-domain reference value,
compared pairwise with Pearson correlation, and feature-value
distributions are compared with KL divergence over shared-edge
histograms. Natural logarithms throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .io_formats import FeatureVectorSet, GradLossRecord

SMOOTHING_EPS = 1e-10


@dataclass
class MetricSeries:
    """Named metric with one value per domain."""

    name: str
    values: dict[str, float]


@dataclass
class Histogram:
    """Normalized histogram; edge vectors are shared between compared pairs."""

    edges: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=np.float64)
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if len(self.edges) != len(self.probs) + 1:
            raise ValidationError("histogram: need n_bins + 1 edges")
        if np.any(np.diff(self.edges) <= 0):
            raise ValidationError("histogram: edges must be strictly ascending")
        if abs(float(self.probs.sum()) - 1.0) > 1e-9 or np.any(self.probs < 0):
            raise ValidationError("histogram: probabilities must sum to 1")


def normalize_metric(series: MetricSeries, ref: float) -> MetricSeries:
    """Center and scale against a reference: (M - ref) / ref.

    Positive values indicate increases over the reference domain.
    """
    if ref == 0.0:
        raise ValidationError(f"normalize '{series.name}': undefined normalization (ref = 0)")
    return MetricSeries(
        series.name, {k: (v - ref) / ref for k, v in series.values.items()}
    )


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson correlation: covariance over the product of standard deviations."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) != len(y) or len(x) < 2:
        raise ValidationError("pearson: need two equal-length series of >= 2 points")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = np.sqrt(np.mean(dx**2))
    sy = np.sqrt(np.mean(dy**2))
    if sx == 0.0 or sy == 0.0:
        raise ValidationError("pearson: degenerate series (zero variance)")
    rho = float(np.mean(dx * dy) / (sx * sy))
    return min(1.0, max(-1.0, rho))


def correlation_matrix(
    series: Sequence[MetricSeries],
) -> tuple[list[str], np.ndarray]:
    """Pairwise Pearson matrix over metric series sharing one domain set.

    Returns (metric names, matrix). Each unordered pair is computed once
    and mirrored, so the matrix is exactly symmetric with unit diagonal.
    """
    if len(series) < 2:
        raise ValidationError("correlation: need >= 2 series")
    domains = sorted(series[0].values)
    if len(domains) < 2:
        raise ValidationError("correlation: need >= 2 domains")
    for s in series:
        if sorted(s.values) != domains:
            raise ValidationError(f"correlation: series '{s.name}' has a different domain set")
    vectors = [np.array([s.values[d] for d in domains]) for s in series]
    n = len(series)
    matrix = np.eye(n)
    for i in range(n):
        for j in range(i + 1, n):
            rho = pearson(vectors[i], vectors[j])
            matrix[i, j] = rho
            matrix[j, i] = rho
    return [s.name for s in series], matrix


def shared_edges(a: np.ndarray, b: np.ndarray, n_bins: int) -> np.ndarray:
    """Equal-width edges over the pooled range of two value sets."""
    pooled = np.concatenate([np.ravel(a), np.ravel(b)])
    return _edges_for(pooled, n_bins)


def _edges_for(values: np.ndarray, n_bins: int) -> np.ndarray:
    lo = float(values.min())
    hi = float(values.max())
    if lo == hi:  # degenerate range: open up a unit-wide window
        lo -= 0.5
        hi += 0.5
    return np.linspace(lo, hi, n_bins + 1)


def histogram(
    features: FeatureVectorSet | np.ndarray,
    n_bins: int,
    edges: np.ndarray | None = None,
) -> Histogram:
    """Pooled scalar histogram of feature values with additive smoothing.

    All vector components are pooled into one value set. When comparing
    two domains, compute edges once with shared_edges and pass them to
    both calls. Values are clipped into the edge range so no mass is
    dropped; probabilities get an additive floor of SMOOTHING_EPS and are
    renormalized, keeping every bin strictly positive.
    """
    if n_bins < 2:
        raise ValidationError(f"histogram: need >= 2 bins, got {n_bins}")
    values = features.vectors if isinstance(features, FeatureVectorSet) else features
    values = np.ravel(np.asarray(values, dtype=np.float64))
    if values.size == 0:
        raise ValidationError("histogram: empty feature set")
    if edges is None:
        edges = _edges_for(values, n_bins)
    else:
        edges = np.asarray(edges, dtype=np.float64)
        if len(edges) != n_bins + 1:
            raise ValidationError("histogram: edges do not match n_bins")
    counts, _ = np.histogram(np.clip(values, edges[0], edges[-1]), bins=edges)
    probs = counts / counts.sum()
    probs = (probs + SMOOTHING_EPS) / (1.0 + n_bins * SMOOTHING_EPS)
    return Histogram(edges, probs)


def kl_divergence(target: Histogram, source: Histogram) -> float:
    """KL divergence D(target || source) in nats; 0 * log(0) := 0.

    Requires identical edge vectors; smoothing in histogram() keeps the
    result finite for histograms built through this module.
    """
    if len(target.probs) != len(source.probs) or not np.array_equal(
        target.edges, source.edges
    ):
        raise ValidationError("kl: histograms have mismatched edges")
    p = target.probs
    q = source.probs
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0.0, p * (np.log(p) - np.log(q)), 0.0)
    return float(terms.sum())


def ingest_grad_loss(records: Sequence[GradLossRecord]) -> dict[str, float]:
    """Means of the precomputed localization/classification grad-loss scalars."""
    if not records:
        raise ValidationError("grad-loss: empty input")
    loc = np.concatenate([r.loc for r in records])
    cls = np.concatenate([r.cls for r in records])
    if loc.size == 0:
        raise ValidationError("grad-loss: records contain no detections")
    return {"loc_mean": float(loc.mean()), "cls_mean": float(cls.mean())}
