import math

import numpy as np
import pytest

from driftbench.errors import ValidationError
from driftbench.io_formats import DetectionSet, read_pgm16
from driftbench.scoremap import (
    aggregate_passes,
    build_score_map,
    dataset_scalar,
    dump_uncertainty_map,
    entropy_map,
    mcdo_map,
    mcdo_map_scalar,
    rasterize,
)

# analytic softmax values for C = 1
BG_PIX = (1.0 / (1.0 + math.e), math.e / (1.0 + math.e))  # (0.26894, 0.73106)
DET_PIX = (1.0 / (1.0 + math.exp(-0.8)), 1.0 - 1.0 / (1.0 + math.exp(-0.8)))


def _dets(rows):
    return DetectionSet(
        [r[0] for r in rows], [r[1] for r in rows], [r[2] for r in rows]
    )


def test_rasterize_integer_box():
    assert rasterize((0, 0, 2, 2), 4, 4) == {(0, 0), (1, 0), (0, 1), (1, 1)}


def test_rasterize_clamps():
    assert rasterize((-5, -5, 1, 1), 4, 4) == {(0, 0)}


def test_rasterize_subpixel_box_empty():
    assert rasterize((0.4, 0.4, 0.6, 0.6), 4, 4) == set()


def test_empty_frame_is_background_softmax():
    m = build_score_map(DetectionSet.empty(), 4, 4, 1)
    assert m.shape == (4, 4, 2)
    assert np.allclose(m[..., 0], BG_PIX[0], atol=1e-12)
    assert np.allclose(m[..., 1], BG_PIX[1], atol=1e-12)
    # frozen 5-decimal values
    assert m[0, 0, 0] == pytest.approx(0.26894, abs=1e-5)
    assert m[0, 0, 1] == pytest.approx(0.73106, abs=1e-5)


def test_single_detection_pixels():
    m = build_score_map(_dets([((0, 0, 2, 2), 0, 0.9)]), 4, 4, 1)
    # covered pixels: softmax(0.9, 0.1) = logistic(0.8)
    assert m[0, 0, 0] == pytest.approx(DET_PIX[0], abs=1e-12)
    assert m[0, 0, 0] == pytest.approx(0.68997, abs=1e-5)
    assert m[1, 1, 1] == pytest.approx(0.31003, abs=1e-5)
    # untouched pixels stay background
    assert m[3, 3, 0] == pytest.approx(BG_PIX[0], abs=1e-12)


def test_two_identical_detections_accumulate():
    rows = [((0, 0, 2, 2), 0, 0.5), ((0, 0, 2, 2), 0, 0.5)]
    m = build_score_map(_dets(rows), 4, 4, 1)
    # accumulated (1.0, 1.0) -> softmax symmetric
    assert m[0, 0, 0] == pytest.approx(0.5, abs=1e-12)
    assert m[0, 0, 1] == pytest.approx(0.5, abs=1e-12)


def test_pixels_are_simplex(rng):
    for _ in range(20):
        n = int(rng.integers(0, 6))
        rows = []
        for _ in range(n):
            x1 = rng.uniform(-1.5, 6)
            y1 = rng.uniform(-1.5, 6)
            rows.append(
                ((x1, y1, x1 + rng.uniform(2, 5), y1 + rng.uniform(2, 5)),
                 int(rng.integers(0, 3)),
                 float(rng.uniform(0, 1)))
            )
        m = build_score_map(_dets(rows), 8, 8, 3)
        assert np.all(m >= 0)
        assert np.allclose(m.sum(axis=2), 1.0, atol=1e-6)


def test_fully_outside_box_rejected():
    with pytest.raises(ValidationError, match="outside"):
        build_score_map(_dets([((10, 10, 12, 12), 0, 0.5)]), 4, 4, 1)


def test_zero_classes_rejected():
    with pytest.raises(ValidationError):
        build_score_map(DetectionSet.empty(), 4, 4, 0)


def test_aggregate_identical_passes_zero_std():
    m = build_score_map(_dets([((0, 0, 2, 2), 0, 0.7)]), 4, 4, 1)
    mean, std = aggregate_passes([m, m, m])
    assert np.array_equal(mean, m)
    assert np.all(std == 0.0)


def test_aggregate_population_std():
    a = np.full((1, 1, 2), 0.2)
    b = np.full((1, 1, 2), 0.4)
    mean, std = aggregate_passes([a, b])
    assert mean[0, 0, 0] == pytest.approx(0.3, abs=1e-12)
    assert std[0, 0, 0] == pytest.approx(0.1, abs=1e-12)  # population: half the gap


def test_aggregate_needs_two_passes():
    m = np.zeros((2, 2, 2))
    with pytest.raises(ValidationError):
        aggregate_passes([m])
    with pytest.raises(ValidationError, match="shape"):
        aggregate_passes([m, np.zeros((2, 3, 2))])


def test_mean_of_simplexes_is_simplex(rng):
    maps = []
    for _ in range(4):
        raw = rng.uniform(0, 1, (3, 3, 3))
        maps.append(raw / raw.sum(axis=2, keepdims=True))
    mean, _ = aggregate_passes(maps)
    assert np.allclose(mean.sum(axis=2), 1.0, atol=1e-12)


def test_entropy_one_hot_is_zero():
    m = np.zeros((1, 1, 3))
    m[0, 0, 2] = 1.0
    assert entropy_map(m)[0, 0] == 0.0


def test_entropy_uniform_two_channels():
    m = np.full((1, 1, 2), 0.5)
    assert entropy_map(m)[0, 0] == pytest.approx(math.log(2), abs=1e-12)


def test_entropy_background_pixel():
    m = np.array([[[BG_PIX[0], BG_PIX[1]]]])
    expected = -(BG_PIX[0] * math.log(BG_PIX[0]) + BG_PIX[1] * math.log(BG_PIX[1]))
    assert entropy_map(m)[0, 0] == pytest.approx(expected, abs=1e-12)
    assert entropy_map(m)[0, 0] == pytest.approx(0.58220, abs=1e-5)


def test_entropy_rejects_negative():
    with pytest.raises(ValidationError):
        entropy_map(np.array([[[-0.1, 1.1]]]))


def test_mcdo_map_identical_passes():
    m = build_score_map(DetectionSet.empty(), 4, 4, 1)
    u = mcdo_map([m, m, m])
    assert u.shape == (4, 4, 2)
    assert np.allclose(u[..., 0], 0.58220, atol=1e-5)
    assert np.all(u[..., 1] == 0.0)


def test_mcdo_map_std_localized_to_changed_box():
    base = build_score_map(_dets([((0, 0, 2, 2), 0, 0.9)]), 6, 6, 1)
    moved = build_score_map(_dets([((0, 0, 2, 3), 0, 0.9)]), 6, 6, 1)
    u = mcdo_map([base, moved])
    nz = u[..., 1] > 0
    expected = np.zeros((6, 6), dtype=bool)
    expected[2, 0:2] = True  # only the row the box grew into differs
    assert np.array_equal(nz, expected)


def test_mcdo_entropy_bounded(rng):
    for _ in range(10):
        maps = []
        for _ in range(3):
            raw = rng.uniform(0, 1, (4, 4, 4))
            maps.append(raw / raw.sum(axis=2, keepdims=True))
        u = mcdo_map(maps)
        assert np.all(u[..., 0] <= math.log(4) + 1e-12)


def test_scalar_zero_map():
    assert mcdo_map_scalar(np.zeros((3, 3, 2))) == 0.0


def test_scalar_constant_entropy():
    u = np.zeros((3, 3, 2))
    u[..., 0] = 0.5822
    assert mcdo_map_scalar(u) == pytest.approx(0.5822, abs=1e-12)


def test_dataset_scalar_mean():
    assert dataset_scalar([0.2, 0.4]) == pytest.approx(0.3, abs=1e-15)


def test_scalar_invariant_to_frame_order(rng):
    scalars = list(rng.uniform(0, 1, 7))
    assert dataset_scalar(scalars) == dataset_scalar(scalars[::-1])


def test_dump_roundtrip(tmp_path, rng):
    u = rng.uniform(0, 0.7, (5, 4, 2))
    sidecar = dump_uncertainty_map(u, tmp_path, "frame_x")
    assert sidecar.exists()
    ent = read_pgm16(tmp_path / "frame_x_entropy.pgm")
    assert ent.shape == (5, 4)
    assert np.allclose(ent / 10000.0, u[..., 0], atol=1e-4)
