import numpy as np
import pytest

from driftbench.calibration import DECEConfig, dece, dece_oracle, detection_features
from driftbench.errors import ValidationError
from driftbench.geometry import match_to_gt
from driftbench.io_formats import DetectionSet, GroundTruthSet


def _feat(score, cx=0.5, cy=0.5, w=0.1, h=0.1):
    return [score, cx, cy, w, h]


def test_perfectly_calibrated_is_zero():
    feats = np.array([_feat(1.0), _feat(1.0, cx=0.9)])
    result = dece(feats, np.array([True, True]), DECEConfig())
    assert result.joint == 0.0
    assert all(v == 0.0 for v in result.per_dimension.values())


def test_single_fp_hand_case():
    result = dece(np.array([_feat(0.8)]), np.array([False]), DECEConfig())
    assert result.joint == 0.8
    assert result.per_dimension["score"] == 0.8


def test_two_in_one_bin_hand_case():
    # both score 0.7 in one bin, one TP one FP: |0.5 - 0.7| = 0.2
    feats = np.array([_feat(0.7), _feat(0.7)])
    result = dece(feats, np.array([True, False]), DECEConfig())
    assert result.joint == pytest.approx(0.2, abs=1e-15)


def test_zero_detections_rejected():
    with pytest.raises(ValidationError, match="zero detections"):
        dece(np.empty((0, 5)), np.empty(0, dtype=bool), DECEConfig())


def test_counts_partition_detections(rng):
    feats = rng.uniform(0, 1, (200, 5))
    tp = rng.random(200) < 0.5
    result = dece(feats, tp, DECEConfig())
    assert result.cell_count.sum() == 200
    assert result.n_detections == 200


def test_clamping_counter():
    feats = np.array([_feat(0.5, cx=1.2, cy=-0.1)])
    result = dece(feats, np.array([True]), DECEConfig())
    assert result.clamped == 2


def test_all_single_bins_degenerates_to_global_gap(rng):
    feats = rng.uniform(0, 1, (50, 5))
    tp = rng.random(50) < 0.4
    cfg = DECEConfig(1, 1, 1, 1, 1)
    result = dece(feats, tp, cfg)
    expected = abs(tp.mean() - feats[:, 0].mean())
    assert result.joint == pytest.approx(expected, abs=1e-12)


def test_score_marginal_equals_classic_ece(rng):
    feats = rng.uniform(0, 1, (300, 5))
    tp = rng.random(300) < 0.5
    marginal = dece(feats, tp, DECEConfig()).per_dimension["score"]
    joint_score_only = dece(feats, tp, DECEConfig(10, 1, 1, 1, 1)).joint
    assert marginal == joint_score_only


def test_permutation_invariant(rng):
    feats = rng.uniform(0, 1, (100, 5))
    tp = rng.random(100) < 0.5
    cfg = DECEConfig()
    a = dece(feats, tp, cfg)
    perm = rng.permutation(100)
    b = dece(feats[perm], tp[perm], cfg)
    assert a.joint == pytest.approx(b.joint, abs=1e-12)
    for k in a.per_dimension:
        assert a.per_dimension[k] == pytest.approx(b.per_dimension[k], abs=1e-12)


def test_oracle_equivalence_bit_for_bit(rng):
    cfg = DECEConfig()
    for _ in range(20):
        feats = rng.uniform(-0.05, 1.05, (100, 5))
        tp = rng.random(100) < 0.5
        fast = dece(feats, tp, cfg)
        ref = dece_oracle(feats, tp, cfg)
        assert fast.joint == ref.joint
        assert fast.per_dimension == ref.per_dimension
        assert fast.clamped == ref.clamped
        assert np.array_equal(fast.cell_index, ref.cell_index)
        assert np.array_equal(fast.cell_count, ref.cell_count)
        assert np.array_equal(fast.cell_conf, ref.cell_conf)
        assert np.array_equal(fast.cell_prec, ref.cell_prec)


def test_oracle_reproduces_hand_cases():
    single = np.array([_feat(0.8)])
    assert dece_oracle(single, np.array([False]), DECEConfig()).joint == 0.8
    two = np.array([_feat(0.7), _feat(0.7)])
    assert dece_oracle(two, np.array([True, False]), DECEConfig()).joint == pytest.approx(
        0.2, abs=1e-15
    )


def test_values_bounded(rng):
    for _ in range(10):
        n = int(rng.integers(1, 60))
        feats = rng.uniform(0, 1, (n, 5))
        tp = rng.random(n) < rng.random()
        result = dece(feats, tp, DECEConfig(7, 3, 3, 3, 3))
        assert 0.0 <= result.joint <= 1.0
        assert all(0.0 <= v <= 1.0 for v in result.per_dimension.values())


def test_detection_features_normalization():
    dets = DetectionSet([[10, 20, 30, 60]], [0], [0.9])
    gts = GroundTruthSet([[10, 20, 30, 60]], [0])
    match = match_to_gt(dets, gts, 0.5)
    feats, tp = detection_features(dets, match, 100, 100)
    assert feats[0].tolist() == [0.9, 0.2, 0.4, 0.2, 0.4]
    assert tp.tolist() == [True]


def test_config_validation():
    with pytest.raises(ValidationError):
        DECEConfig(score_bins=0)
    assert DECEConfig().n_total == 10 * 5**4
