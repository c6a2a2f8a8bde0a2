import math

import numpy as np
import pytest

from driftbench.errors import ValidationError
from driftbench.io_formats import FeatureVectorSet
from driftbench.shift_analysis import (
    Histogram,
    MetricSeries,
    SMOOTHING_EPS,
    correlation_matrix,
    histogram,
    ingest_grad_loss,
    kl_divergence,
    normalize_metric,
    pearson,
    shared_edges,
)
from driftbench.io_formats import GradLossRecord


def test_normalize_reference_is_zero():
    s = MetricSeries("m", {"src": 4.0})
    assert normalize_metric(s, 4.0).values["src"] == 0.0


def test_normalize_double_is_one():
    s = MetricSeries("m", {"a": 8.0})
    assert normalize_metric(s, 4.0).values["a"] == 1.0


def test_normalize_uncertainty_column_shape():
    # values 3582 and 5355 against reference 3582: (0, 1773/3582)
    s = MetricSeries("u", {"src": 3582.0, "tgt": 5355.0})
    out = normalize_metric(s, 3582.0)
    assert out.values["src"] == 0.0
    assert out.values["tgt"] == pytest.approx(1773.0 / 3582.0, abs=1e-12)
    assert out.values["tgt"] == pytest.approx(0.4950, abs=1e-4)


def test_normalize_zero_ref_rejected():
    with pytest.raises(ValidationError, match="undefined normalization"):
        normalize_metric(MetricSeries("m", {"a": 1.0}), 0.0)


def test_normalize_roundtrip():
    s = MetricSeries("m", {"a": 3.0, "b": -2.0, "c": 11.5})
    ref = 7.0
    out = normalize_metric(s, ref)
    for k, v in out.values.items():
        assert v * ref + ref == pytest.approx(s.values[k], abs=1e-12)


def test_pearson_self():
    x = [1.0, 2.0, 5.0]
    assert pearson(x, x) == 1.0


def test_pearson_negated():
    x = [1.0, 2.0, 5.0]
    assert pearson(x, [-v for v in x]) == -1.0


def test_pearson_hand_case():
    # cov = 5/3, sigma_x = sqrt(2/3), sigma_y = sqrt(38/9)
    x = (1.0, 2.0, 3.0)
    y = (2.0, 4.0, 7.0)
    expected = (5.0 / 3.0) / (math.sqrt(2.0 / 3.0) * math.sqrt(38.0 / 9.0))
    assert pearson(x, y) == pytest.approx(expected, abs=1e-12)
    assert pearson(x, y) == pytest.approx(0.99340, abs=1e-5)


def test_pearson_affine_invariance(rng):
    x = rng.normal(0, 1, 20)
    y = rng.normal(0, 1, 20)
    rho = pearson(x, y)
    assert pearson(3.0 * x + 7.0, y) == pytest.approx(rho, abs=1e-12)
    assert pearson(-2.0 * x + 1.0, y) == pytest.approx(-rho, abs=1e-12)


def test_pearson_degenerate():
    with pytest.raises(ValidationError, match="degenerate"):
        pearson([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])


def test_correlation_matrix_identical_series():
    a = MetricSeries("a", {"d1": 1.0, "d2": 2.0, "d3": 3.0})
    b = MetricSeries("b", dict(a.values))
    names, m = correlation_matrix([a, b])
    assert names == ["a", "b"]
    assert m[0, 1] == 1.0


def test_correlation_matrix_symmetric_unit_diagonal(rng):
    series = [
        MetricSeries(f"m{i}", {f"d{j}": float(rng.normal()) for j in range(6)})
        for i in range(4)
    ]
    _, m = correlation_matrix(series)
    assert np.array_equal(m, m.T)
    assert np.all(np.diag(m) == 1.0)


def test_correlation_matrix_planted_signs(rng):
    base = np.linspace(0, 1, 8)
    noise = 0.01 * rng.normal(0, 1, 8)
    series = [
        MetricSeries("up", {f"d{j}": float(base[j]) for j in range(8)}),
        MetricSeries("up2", {f"d{j}": float(2 * base[j] + noise[j]) for j in range(8)}),
        MetricSeries("down", {f"d{j}": float(-base[j] + noise[j]) for j in range(8)}),
    ]
    names, m = correlation_matrix(series)
    assert m[0, 1] > 0.9
    assert m[0, 2] < -0.9


def test_correlation_matrix_domain_mismatch():
    a = MetricSeries("a", {"d1": 1.0, "d2": 2.0})
    b = MetricSeries("b", {"d1": 1.0, "d3": 2.0})
    with pytest.raises(ValidationError, match="different domain set"):
        correlation_matrix([a, b])


def test_histogram_single_value():
    h = histogram(np.full(50, 3.25), 8)
    assert h.probs.max() == pytest.approx(1.0, abs=1e-6)
    assert h.probs.sum() == pytest.approx(1.0, abs=1e-12)


def test_histogram_uniform_statistical(rng):
    values = rng.uniform(0.0, 1.0, 100_000)
    h = histogram(values, 10, edges=np.linspace(0, 1, 11))
    assert np.allclose(h.probs, 0.1, atol=0.02)


def test_histogram_shared_edges_property(rng):
    a = rng.normal(0, 1, 500)
    b = rng.normal(2, 1, 500)
    edges = shared_edges(a, b, 16)
    ha = histogram(a, 16, edges)
    hb = histogram(b, 16, edges)
    assert np.array_equal(ha.edges, hb.edges)


def test_histogram_floor_positive(rng):
    h = histogram(rng.normal(0, 1, 100), 32)
    assert np.all(h.probs > 0.0)
    assert np.all(h.probs >= SMOOTHING_EPS / 2)


def test_histogram_empty_rejected():
    with pytest.raises(ValidationError, match="empty"):
        histogram(np.empty(0), 4)


def test_histogram_accepts_feature_set(rng):
    fset = FeatureVectorSet("d", 4, rng.normal(0, 1, (10, 4)).astype(np.float32),
                            [f"f{i}" for i in range(10)])
    h = histogram(fset, 8)
    assert len(h.probs) == 8


def test_kl_identical_zero():
    h = Histogram(np.array([0.0, 0.5, 1.0]), np.array([0.3, 0.7]))
    assert kl_divergence(h, h) == 0.0


def test_kl_analytic_case():
    edges = np.array([0.0, 0.5, 1.0])
    p = Histogram(edges, np.array([0.5, 0.5]))
    q = Histogram(edges, np.array([0.25, 0.75]))
    expected = 0.5 * math.log(2.0) + 0.5 * math.log(2.0 / 3.0)
    assert kl_divergence(p, q) == pytest.approx(expected, abs=1e-12)
    assert kl_divergence(p, q) == pytest.approx(0.14384, abs=1e-5)


def test_kl_nonnegative_fuzzed(rng):
    edges = np.linspace(-3, 3, 33)
    for _ in range(100):
        a = histogram(rng.normal(rng.uniform(-1, 1), 1.0, 400), 32, edges)
        b = histogram(rng.normal(rng.uniform(-1, 1), 1.0, 400), 32, edges)
        assert kl_divergence(a, b) >= 0.0


def test_kl_mismatched_edges_rejected():
    a = Histogram(np.array([0.0, 1.0, 2.0]), np.array([0.5, 0.5]))
    b = Histogram(np.array([0.0, 0.5, 1.0]), np.array([0.5, 0.5]))
    with pytest.raises(ValidationError, match="edges"):
        kl_divergence(a, b)


def test_ingest_grad_loss_single():
    out = ingest_grad_loss([GradLossRecord("f0", [0.4], [0.6])])
    assert out == {"loc_mean": 0.4, "cls_mean": 0.6}


def test_ingest_grad_loss_mean():
    out = ingest_grad_loss(
        [GradLossRecord("f0", [0.4], [0.6]), GradLossRecord("f1", [0.8], [0.2])]
    )
    assert out["loc_mean"] == pytest.approx(0.6, abs=1e-15)
    assert out["cls_mean"] == pytest.approx(0.4, abs=1e-15)


def test_ingest_grad_loss_empty():
    with pytest.raises(ValidationError):
        ingest_grad_loss([])
