import numpy as np
import pytest

from driftbench.bgmetrics import average_precision
from driftbench.errors import ValidationError
from driftbench.io_formats import (
    BG_GROUND,
    BG_SKY,
    BG_TREE,
    read_detections,
    read_features,
    read_ground_truth,
    read_segmap,
)
from driftbench.scoremap import build_score_map, mcdo_map, mcdo_map_scalar
from driftbench.shift_analysis import histogram, kl_divergence, shared_edges
from driftbench.synthgen import (
    ScenarioConfig,
    band_rows,
    generate,
    make_segmap,
    shift_pair,
    stream,
    write_dataset,
)


def test_stream_deterministic_and_keyed():
    a = stream(7, "gt", 0).random(4)
    b = stream(7, "gt", 0).random(4)
    c = stream(7, "gt", 1).random(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_config_validation():
    with pytest.raises(ValidationError):
        ScenarioConfig(bg_mix=(0.5, 0.5, 0.5))
    with pytest.raises(ValidationError):
        ScenarioConfig(miss_rate=(0.0, 1.5, 0.0))
    with pytest.raises(ValidationError):
        ScenarioConfig(jitter_pos=-1.0)
    with pytest.raises(ValidationError):
        ScenarioConfig(fp_rate=2.0)


def test_segmap_is_banded():
    cfg = ScenarioConfig(width=10, height=20, bg_mix=(0.5, 0.25, 0.25))
    seg = make_segmap(cfg)
    sky_end, tree_end = band_rows(cfg)
    assert sky_end == 10 and tree_end == 15
    assert np.all(seg.labels[:10] == BG_SKY)
    assert np.all(seg.labels[10:15] == BG_TREE)
    assert np.all(seg.labels[15:] == BG_GROUND)


def test_noiseless_identity():
    cfg = ScenarioConfig(seed=3, frames=3, passes=2)
    ds = generate(cfg)
    gt = {r.frame_id: r.boxes for r in ds.ground_truth}
    for rec in ds.detections:
        expect = gt[rec.frame_id]
        assert np.array_equal(rec.detections.boxes, expect.boxes)
        assert np.array_equal(rec.detections.classes, expect.classes)
        assert np.all(rec.detections.scores == 1.0)


def test_boxes_live_inside_their_band():
    cfg = ScenarioConfig(seed=5, frames=8, objects_per_frame=6)
    ds = generate(cfg)
    seg = make_segmap(cfg)
    from driftbench.bgmetrics import bg_of_box

    for rec in ds.ground_truth:
        for i in range(len(rec.boxes)):
            label = bg_of_box(rec.boxes.boxes[i], seg)
            assert label in (BG_SKY, BG_TREE, BG_GROUND)
            # box must be fully inside exactly one band
            y1, y2 = rec.boxes.boxes[i][1], rec.boxes.boxes[i][3]
            sky_end, tree_end = band_rows(cfg)
            spans = {BG_SKY: (0, sky_end), BG_TREE: (sky_end, tree_end),
                     BG_GROUND: (tree_end, cfg.height)}
            y0, yend = spans[label]
            assert y0 <= y1 and y2 <= yend


def test_same_seed_identical_files(tmp_path):
    cfg = ScenarioConfig(seed=11, frames=3, passes=2, jitter_pos=1.0, jitter_score=0.1,
                         fp_rate=0.3)
    for sub in ("a", "b"):
        write_dataset(generate(cfg), tmp_path / sub)
    for name in ("detections.jsonl", "ground_truth.jsonl", "scenario.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    for pgm in sorted((tmp_path / "a" / "segmaps").iterdir()):
        assert pgm.read_bytes() == (tmp_path / "b" / "segmaps" / pgm.name).read_bytes()


def test_written_files_validate(tmp_path):
    cfg = ScenarioConfig(seed=2, frames=2, passes=3, jitter_pos=0.5, fp_rate=0.5,
                         jitter_score=0.2)
    write_dataset(generate(cfg), tmp_path)
    dets = read_detections(tmp_path / "detections.jsonl")
    gts = read_ground_truth(tmp_path / "ground_truth.jsonl")
    assert len(dets) == 2 * 3
    assert len(gts) == 2
    seg = read_segmap(tmp_path / "segmaps" / "frame_0000.pgm")
    assert seg.width == cfg.width


def test_tree_miss_leaves_other_backgrounds_untouched():
    base = ScenarioConfig(seed=13, frames=6, objects_per_frame=5, passes=1,
                          jitter_pos=0.8, jitter_score=0.05)
    missed = ScenarioConfig(**{**base.__dict__, "miss_rate": (0.0, 1.0, 0.0)})
    ds0 = generate(base)
    ds1 = generate(missed)
    seg = make_segmap(base)
    from driftbench.bgmetrics import bg_of_box

    for rec0, rec1 in zip(ds0.detections, ds1.detections):
        kept0 = [i for i in range(len(rec0.detections))
                 if bg_of_box(rec0.detections.boxes[i], seg) != BG_TREE]
        assert len(rec1.detections) == len(kept0)
        assert np.array_equal(rec1.detections.boxes, rec0.detections.boxes[kept0])
        assert np.array_equal(rec1.detections.scores, rec0.detections.scores[kept0])


def test_full_miss_gives_zero_tree_ap():
    cfg = ScenarioConfig(seed=13, frames=6, objects_per_frame=5, passes=1,
                         miss_rate=(0.0, 1.0, 0.0))
    ds = generate(cfg)
    gt = {r.frame_id: r.boxes for r in ds.ground_truth}
    from driftbench.bgmetrics import bg_report

    frames = [(rec.frame_id, rec.detections, gt[rec.frame_id]) for rec in ds.detections]
    report = bg_report(frames, ds.segmaps, metrics=("ap",))
    assert report.metrics["ap"]["tree"] == 0.0
    assert report.metrics["ap"]["sky"] == 1.0
    assert report.metrics["ap"]["ground"] == 1.0


def test_shift_pair_knob_validation():
    cfg = ScenarioConfig()
    with pytest.raises(ValidationError, match="strictly increasing"):
        shift_pair(cfg, [0.0, 0.0])
    with pytest.raises(ValidationError, match="strictly increasing"):
        shift_pair(cfg, [2.0, 1.0])


def test_shift_pair_kl_grows_with_knob():
    cfg = ScenarioConfig(seed=21, frames=8, passes=2)
    source, targets = shift_pair(cfg, [0.0, 2.0, 4.0], feature_dim=128)
    kls = []
    for t in targets:
        edges = shared_edges(source.features.vectors, t.features.vectors, 32)
        kls.append(
            kl_divergence(
                histogram(t.features, 32, edges), histogram(source.features, 32, edges)
            )
        )
    assert kls[0] < 0.05  # knob 0: same generative process
    assert kls[0] < kls[1] < kls[2]


def test_shift_pair_uncertainty_grows_with_knob():
    cfg = ScenarioConfig(seed=33, frames=6, objects_per_frame=4, passes=4)
    source, targets = shift_pair(cfg, [0.0, 2.0, 4.0])

    def scalar(bundle):
        grouped = {}
        for rec in bundle.dataset.detections:
            grouped.setdefault(rec.frame_id, {})[rec.pass_id] = rec.detections
        vals = []
        for fid, passes in grouped.items():
            maps = [build_score_map(passes[m], cfg.height, cfg.width, 1)
                    for m in range(cfg.passes)]
            vals.append(mcdo_map_scalar(mcdo_map(maps)))
        return float(np.mean(vals))

    s0 = scalar(targets[0])
    s1 = scalar(targets[1])
    s2 = scalar(targets[2])
    assert s0 < s1 < s2


def test_features_roundtrip_through_fvec(tmp_path):
    cfg = ScenarioConfig(seed=4, frames=3)
    source, targets = shift_pair(cfg, [1.0], feature_dim=16)
    from driftbench.io_formats import write_features

    write_features(source.features, tmp_path / "src.fvec")
    back = read_features(tmp_path / "src.fvec")
    assert np.array_equal(back.vectors, source.features.vectors)
    assert back.frame_ids == source.features.frame_ids
