"""driftbench command-line interface.

One executable, one subcommand per pipeline. Flags override a TOML
config file (--config), which overrides built-in defaults; the resolved
configuration, input digests, toolkit version, and wall time go into a
run manifest. Exit codes: 0 success, 1 usage error, 2 data/validation
error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

import numpy as np

from . import __version__
from .bgmetrics import BgReport, bg_report
from .calibration import DECEConfig, dece, detection_features
from .errors import UsageError, ValidationError
from .geometry import match_to_gt
from .io_formats import (
    BG_NAMES,
    DetectionSet,
    GroundTruthSet,
    read_detections,
    read_features,
    read_grad_loss,
    read_ground_truth,
    read_segmap,
    write_csv,
    write_features,
    write_json_report,
)
from .mcdo_nms import aggregate, associate_passes, label_lists
from .parallel import chunked_map
from .scoremap import build_score_map, dataset_scalar, dump_uncertainty_map, mcdo_map, mcdo_map_scalar
from .shift_analysis import (
    MetricSeries,
    correlation_matrix,
    histogram,
    ingest_grad_loss,
    kl_divergence,
    normalize_metric,
    shared_edges,
)
from .synthgen import ScenarioConfig, generate, shift_pair, write_dataset
from .uda_sim import adv_loss, disc_forward_batch, pool, total_loss, train_discriminator

SUBCOMMANDS = ("eval", "dece", "mcdo-map", "mcdo-nms", "klcorr", "uda-sim", "synthgen", "report")


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems with exit code 1."""

    def error(self, message):
        raise UsageError(message)


def _default_threads() -> int:
    env = os.environ.get("DRIFTBENCH_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"DRIFTBENCH_THREADS must be an integer, got {env!r}")
    return os.cpu_count() or 1


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _resolve(defaults: dict, config_path, flags: dict) -> dict:
    """Three-layer precedence: defaults < config file < explicit flags."""
    resolved = dict(defaults)
    if config_path:
        with open(config_path, "rb") as fh:
            file_cfg = tomllib.load(fh)
        for key, value in file_cfg.items():
            if key not in defaults:
                raise UsageError(f"unknown config key '{key}' in {config_path}")
            resolved[key] = value
    for key, value in flags.items():
        if value is not None:
            resolved[key] = value
    return resolved


def _write_manifest(manifest_path, subcommand: str, resolved: dict, inputs, started: float):
    manifest = {
        "subcommand": subcommand,
        "resolved_config": {k: v for k, v in sorted(resolved.items())},
        "inputs": {str(p): _sha256(p) for p in inputs if p and Path(p).is_file()},
        "toolkit_version": __version__,
        "wall_time_s": time.time() - started,
    }
    write_json_report(manifest_path, manifest)


def _group_detections(records, pass_ids=None) -> dict[str, dict[int, DetectionSet]]:
    """frame_id -> pass_id -> DetectionSet, in file order."""
    grouped: dict[str, dict[int, DetectionSet]] = {}
    for rec in records:
        if pass_ids is not None and rec.pass_id not in pass_ids:
            continue
        grouped.setdefault(rec.frame_id, {})[rec.pass_id] = rec.detections
    return grouped


def _frame_parallel(fn, items, threads: int) -> list:
    return chunked_map(fn, items, threads)


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


def _cmd_eval(args) -> int:
    started = time.time()
    defaults = {
        "iou": 0.5,
        "pass_id": 0,
        "metrics": "ap,dece",
        "domain": "domain",
        "threads": _default_threads(),
    }
    cfg = _resolve(
        defaults,
        args.config,
        {
            "iou": args.iou,
            "pass_id": args.pass_id,
            "metrics": args.metrics,
            "domain": args.domain,
            "threads": args.threads,
        },
    )
    grouped = _group_detections(read_detections(args.dets), pass_ids={cfg["pass_id"]})
    gt_records = {r.frame_id: r.boxes for r in read_ground_truth(args.gt)}
    frame_ids = list(gt_records)
    for fid in grouped:
        if fid not in gt_records:
            frame_ids.append(fid)
    frames = []
    for fid in frame_ids:
        dets = grouped.get(fid, {}).get(cfg["pass_id"], DetectionSet.empty())
        frames.append((fid, dets, gt_records.get(fid, GroundTruthSet.empty())))

    seg_dir = Path(args.seg)
    segs = {}
    for fid, _, _ in frames:
        seg_path = seg_dir / f"{fid}.pgm"
        if seg_path.is_file():
            segs[fid] = read_segmap(seg_path)

    metric_names = tuple(m.strip() for m in cfg["metrics"].split(",") if m.strip())
    report: BgReport = bg_report(
        frames, segs, metric_names, iou_thresh=cfg["iou"], threads=cfg["threads"]
    )
    rows = []
    for metric in metric_names:
        vals = report.metrics[metric]
        rows.append(
            [cfg["domain"], metric, vals["total"]] + [vals[name] for name in BG_NAMES]
        )
    write_csv(args.out, ["domain", "metric", "total", "sky", "tree", "ground"], rows)
    if report.skipped_frames:
        print(
            f"warning: {report.skipped_frames} frame(s) without a segmentation map "
            "were excluded",
            file=sys.stderr,
        )
    manifest = args.manifest or f"{args.out}.manifest.json"
    _write_manifest(manifest, "eval", cfg, [args.dets, args.gt], started)
    return 0


# ---------------------------------------------------------------------------
# dece
# ---------------------------------------------------------------------------


def _cmd_dece(args) -> int:
    started = time.time()
    defaults = {
        "iou": 0.5,
        "pass_id": 0,
        "bins_score": 10,
        "bins_cx": 5,
        "bins_cy": 5,
        "bins_w": 5,
        "bins_h": 5,
        "threads": _default_threads(),
    }
    cfg = _resolve(
        defaults,
        args.config,
        {
            "iou": args.iou,
            "pass_id": args.pass_id,
            "bins_score": args.bins_score,
            "bins_cx": args.bins_cx,
            "bins_cy": args.bins_cy,
            "bins_w": args.bins_w,
            "bins_h": args.bins_h,
            "threads": args.threads,
        },
    )
    dece_cfg = DECEConfig(
        cfg["bins_score"], cfg["bins_cx"], cfg["bins_cy"], cfg["bins_w"], cfg["bins_h"],
        iou_thresh=cfg["iou"],
    )
    grouped = _group_detections(read_detections(args.dets), pass_ids={cfg["pass_id"]})
    gt_records = {r.frame_id: r.boxes for r in read_ground_truth(args.gt)}

    feats_parts, tp_parts = [], []
    for fid, passes in grouped.items():
        dets = passes[cfg["pass_id"]]
        if len(dets) == 0:
            continue
        gts = gt_records.get(fid, GroundTruthSet.empty())
        match = match_to_gt(dets, gts, cfg["iou"])
        f, t = detection_features(dets, match, args.width, args.height)
        feats_parts.append(f)
        tp_parts.append(t)
    if not feats_parts:
        raise ValidationError("dece: zero detections")
    result = dece(np.concatenate(feats_parts), np.concatenate(tp_parts), dece_cfg)

    rows = [
        list(result.cell_index[i])
        + [int(result.cell_count[i]), float(result.cell_conf[i]), float(result.cell_prec[i])]
        for i in range(len(result.cell_count))
    ]
    write_csv(
        args.out,
        ["score_bin", "cx_bin", "cy_bin", "w_bin", "h_bin", "count", "conf", "prec"],
        rows,
    )
    summary = {
        "joint": result.joint,
        "per_dimension": result.per_dimension,
        "n_detections": result.n_detections,
        "clamped": result.clamped,
    }
    print(json.dumps(summary, sort_keys=True))
    manifest = args.manifest or f"{args.out}.manifest.json"
    _write_manifest(manifest, "dece", cfg, [args.dets, args.gt], started)
    return 0


# ---------------------------------------------------------------------------
# mcdo-map
# ---------------------------------------------------------------------------


def _cmd_mcdo_map(args) -> int:
    started = time.time()
    defaults = {"passes": 2, "classes": 1, "dump_maps": False, "threads": _default_threads()}
    cfg = _resolve(
        defaults,
        args.config,
        {
            "passes": args.passes,
            "classes": args.classes,
            "dump_maps": args.dump_maps or None,
            "threads": args.threads,
        },
    )
    n_passes = cfg["passes"]
    grouped = _group_detections(read_detections(args.dets))
    frame_ids = list(grouped)
    for fid in frame_ids:
        have = sorted(grouped[fid])
        if have != list(range(n_passes)):
            raise ValidationError(
                f"mcdo-map: frame '{fid}' has passes {have}, expected 0..{n_passes - 1}"
            )

    def frame_umap(fid):
        maps = [
            build_score_map(grouped[fid][m], args.height, args.width, cfg["classes"])
            for m in range(n_passes)
        ]
        return mcdo_map(maps)

    umaps = _frame_parallel(frame_umap, frame_ids, cfg["threads"])
    scalars = {fid: mcdo_map_scalar(u) for fid, u in zip(frame_ids, umaps)}

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if cfg["dump_maps"]:
        for fid, umap in zip(frame_ids, umaps):
            dump_uncertainty_map(umap, out, fid)
    write_json_report(
        out / "summary.json",
        {
            "dataset_scalar": dataset_scalar(list(scalars.values())),
            "frames": scalars,
            "passes": n_passes,
        },
    )
    manifest = args.manifest or str(out / "manifest.json")
    _write_manifest(manifest, "mcdo-map", cfg, [args.dets], started)
    return 0


# ---------------------------------------------------------------------------
# mcdo-nms
# ---------------------------------------------------------------------------


def _cmd_mcdo_nms(args) -> int:
    started = time.time()
    defaults = {"passes": 2, "iou_assoc": 0.5, "iou": 0.5, "threads": _default_threads()}
    cfg = _resolve(
        defaults,
        args.config,
        {
            "passes": args.passes,
            "iou_assoc": args.iou_assoc,
            "iou": args.iou,
            "threads": args.threads,
        },
    )
    grouped = _group_detections(read_detections(args.dets))
    gt_records = {r.frame_id: r.boxes for r in read_ground_truth(args.gt)}
    all_lists, all_tp = [], []
    for fid, passes in grouped.items():
        have = sorted(passes)
        if have != list(range(cfg["passes"])):
            raise ValidationError(
                f"mcdo-nms: frame '{fid}' has passes {have}, expected 0..{cfg['passes'] - 1}"
            )
        lists = associate_passes([passes[m] for m in range(cfg["passes"])], cfg["iou_assoc"])
        tp = label_lists(lists, gt_records.get(fid, GroundTruthSet.empty()), cfg["iou"])
        all_lists.extend(lists)
        all_tp.append(tp)
    if not all_lists:
        raise ValidationError("mcdo-nms: no detections in any pass")
    result = aggregate(all_lists, np.concatenate(all_tp) if all_tp else np.zeros(0, bool))
    write_json_report(
        args.out,
        {
            "localization": {"total": result.loc_total, "tp": result.loc_tp, "fp": result.loc_fp},
            "classification": {"total": result.cls_total, "tp": result.cls_tp, "fp": result.cls_fp},
            "n_lists": int(len(result.cardinalities)),
        },
    )
    manifest = args.manifest or f"{args.out}.manifest.json"
    _write_manifest(manifest, "mcdo-nms", cfg, [args.dets, args.gt], started)
    return 0


# ---------------------------------------------------------------------------
# klcorr
# ---------------------------------------------------------------------------


def _read_metrics_csv(path) -> list[MetricSeries]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ValidationError(f"{path}: empty metrics CSV")
    header = lines[0].split(",")
    if header[0] != "domain" or len(header) < 2:
        raise ValidationError(f"{path}: metrics CSV needs a 'domain' column plus metrics")
    series = [MetricSeries(name, {}) for name in header[1:]]
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != len(header):
            raise ValidationError(f"{path}: line {lineno}: expected {len(header)} cells")
        for s, cell in zip(series, cells[1:]):
            if cell != "":
                s.values[cells[0]] = float(cell)
    return series


def _cmd_klcorr(args) -> int:
    started = time.time()
    defaults = {"bins": 64}
    cfg = _resolve(defaults, args.config, {"bins": args.bins})
    inputs = []
    if args.features_src and args.features_tgt:
        src = read_features(args.features_src)
        tgt = read_features(args.features_tgt)
        edges = shared_edges(src.vectors, tgt.vectors, cfg["bins"])
        kl = kl_divergence(
            histogram(tgt, cfg["bins"], edges), histogram(src, cfg["bins"], edges)
        )
        print(repr(kl))
        inputs += [args.features_src, args.features_tgt]
    elif args.features_src or args.features_tgt:
        raise UsageError("klcorr: --features-src and --features-tgt must be given together")
    if args.metrics_csv:
        if not args.out_corr:
            raise UsageError("klcorr: --metrics-csv requires --out-corr")
        names, matrix = correlation_matrix(_read_metrics_csv(args.metrics_csv))
        rows = [[name] + [float(v) for v in matrix[i]] for i, name in enumerate(names)]
        write_csv(args.out_corr, ["metric"] + names, rows)
        inputs.append(args.metrics_csv)
    if not inputs:
        raise UsageError("klcorr: nothing to do (give feature files and/or --metrics-csv)")
    manifest = args.manifest or "klcorr.manifest.json"
    _write_manifest(manifest, "klcorr", cfg, inputs, started)
    return 0


# ---------------------------------------------------------------------------
# uda-sim
# ---------------------------------------------------------------------------


def _cmd_uda_sim(args) -> int:
    started = time.time()
    defaults = {
        "seed": 0,
        "frames": 16,
        "passes": 6,
        "width": 64,
        "height": 64,
        "objects": 3,
        "steps": 300,
        "lr": 0.1,
        "lam": 0.1,
        "shift": 3.0,
        "source_jitter": 0.5,
        "grid": 4,
        "l_det": 1.0,
        "threads": _default_threads(),
    }
    cfg = _resolve(
        defaults,
        args.config,
        {
            "seed": args.seed,
            "frames": args.frames,
            "passes": args.passes,
            "steps": args.steps,
            "lr": args.lr,
            "lam": args.lam,
            "shift": args.shift,
            "grid": args.grid,
            "l_det": args.l_det,
            "threads": args.threads,
        },
    )

    def domain_maps(jitter: float, seed: int):
        scen = ScenarioConfig(
            seed=seed,
            frames=cfg["frames"],
            width=cfg["width"],
            height=cfg["height"],
            objects_per_frame=cfg["objects"],
            jitter_pos=jitter,
            jitter_score=min(0.05 + jitter / 20.0, 0.3),
            passes=cfg["passes"],
        )
        ds = generate(scen)
        grouped = _group_detections(ds.detections)

        def frame_umap(fid):
            maps = [
                build_score_map(grouped[fid][m], scen.height, scen.width, scen.classes)
                for m in range(scen.passes)
            ]
            return mcdo_map(maps)

        return _frame_parallel(frame_umap, ds.frame_ids, cfg["threads"])

    src_maps = domain_maps(cfg["source_jitter"], cfg["seed"])
    tgt_maps = domain_maps(cfg["source_jitter"] + cfg["shift"], cfg["seed"] + 1)
    disc, trace = train_discriminator(
        src_maps, tgt_maps, steps=cfg["steps"], lr=cfg["lr"], seed=cfg["seed"], grid=cfg["grid"]
    )
    src_probs = disc_forward_batch(disc, np.stack([pool(m, cfg["grid"]) for m in src_maps]))
    tgt_probs = disc_forward_batch(disc, np.stack([pool(m, cfg["grid"]) for m in tgt_maps]))
    l_adv = adv_loss(src_probs, tgt_probs)
    breakdown = total_loss(cfg["l_det"], l_adv, cfg["lam"])

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(
        out / "accuracy_trace.csv",
        ["step", "accuracy"],
        [[i, float(a)] for i, a in enumerate(trace)],
    )
    write_csv(
        out / "loss_breakdown.csv",
        ["l_detection", "l_adv", "lambda", "l_total"],
        [[breakdown.l_detection, breakdown.l_adv, breakdown.lam, breakdown.l_total]],
    )
    print(
        json.dumps(
            {"final_accuracy": float(trace[-1]), "l_adv": breakdown.l_adv, "l_total": breakdown.l_total},
            sort_keys=True,
        )
    )
    manifest = args.manifest or str(out / "manifest.json")
    _write_manifest(manifest, "uda-sim", cfg, [], started)
    return 0


# ---------------------------------------------------------------------------
# synthgen
# ---------------------------------------------------------------------------


def _cmd_synthgen(args) -> int:
    started = time.time()
    defaults = {
        "seed": 0,
        "frames": 4,
        "width": 64,
        "height": 64,
        "classes": 1,
        "objects": 3,
        "passes": 1,
        "jitter_pos": 0.0,
        "jitter_score": 0.0,
        "miss_sky": 0.0,
        "miss_tree": 0.0,
        "miss_ground": 0.0,
        "fp_rate": 0.0,
        "mix": "0.4,0.3,0.3",
        "box_min": 8.0,
        "box_max": 16.0,
        "ladder": "",
        "feature_dim": 64,
    }
    cfg = _resolve(
        defaults,
        args.config,
        {
            "seed": args.seed,
            "frames": args.frames,
            "width": args.width,
            "height": args.height,
            "classes": args.classes,
            "objects": args.objects,
            "passes": args.passes,
            "jitter_pos": args.jitter_pos,
            "jitter_score": args.jitter_score,
            "miss_sky": args.miss_sky,
            "miss_tree": args.miss_tree,
            "miss_ground": args.miss_ground,
            "fp_rate": args.fp_rate,
            "mix": args.mix,
            "box_min": args.box_min,
            "box_max": args.box_max,
            "ladder": args.ladder,
            "feature_dim": args.feature_dim,
        },
    )
    mix = tuple(float(v) for v in str(cfg["mix"]).split(","))
    if len(mix) != 3:
        raise UsageError("synthgen: --mix needs three comma-separated fractions")
    scen = ScenarioConfig(
        seed=cfg["seed"],
        frames=cfg["frames"],
        width=cfg["width"],
        height=cfg["height"],
        classes=cfg["classes"],
        objects_per_frame=cfg["objects"],
        bg_mix=mix,
        box_size=(cfg["box_min"], cfg["box_max"]),
        jitter_pos=cfg["jitter_pos"],
        jitter_score=cfg["jitter_score"],
        miss_rate=(cfg["miss_sky"], cfg["miss_tree"], cfg["miss_ground"]),
        fp_rate=cfg["fp_rate"],
        passes=cfg["passes"],
    )
    out = Path(args.out)
    if str(cfg["ladder"]).strip():
        knobs = [float(v) for v in str(cfg["ladder"]).split(",")]
        source, targets = shift_pair(scen, knobs, feature_dim=cfg["feature_dim"])
        for bundle in [source] + targets:
            ddir = out / bundle.domain_id
            write_dataset(bundle.dataset, ddir)
            write_features(bundle.features, ddir / "features.fvec")
    else:
        write_dataset(generate(scen), out)
    manifest = args.manifest or str(out / "manifest.json")
    _write_manifest(manifest, "synthgen", cfg, [], started)
    return 0


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


def _cmd_report(args) -> int:
    started = time.time()
    defaults = {"ref": ""}
    cfg = _resolve(defaults, args.config, {"ref": args.ref})
    in_dir = Path(args.inputs)
    domain_metrics: dict[str, dict[str, float | None]] = {}
    inputs = []
    for path in sorted(in_dir.glob("*.json")):
        obj = json.loads(path.read_text(encoding="utf-8"))
        if "domain" not in obj or "metrics" not in obj:
            raise ValidationError(f"{path}: expected keys 'domain' and 'metrics'")
        domain_metrics[str(obj["domain"])] = dict(obj["metrics"])
        inputs.append(path)
    if not domain_metrics:
        raise ValidationError(f"report: no domain JSON files under {in_dir}")
    if args.grad_loss:
        gl_dir = Path(args.grad_loss)
        for domain in domain_metrics:
            gl_path = gl_dir / f"{domain}.jsonl"
            if gl_path.is_file():
                means = ingest_grad_loss(read_grad_loss(gl_path))
                domain_metrics[domain]["grad_loss_loc"] = means["loc_mean"]
                domain_metrics[domain]["grad_loss_cls"] = means["cls_mean"]
                inputs.append(gl_path)

    metric_names = sorted({m for vals in domain_metrics.values() for m in vals})
    domains = sorted(domain_metrics)
    rows = [
        [d] + [domain_metrics[d].get(m) for m in metric_names] for d in domains
    ]
    write_csv(args.out, ["domain"] + metric_names, rows)

    series = [
        MetricSeries(m, {d: domain_metrics[d][m] for d in domains
                         if domain_metrics[d].get(m) is not None})
        for m in metric_names
    ]
    if cfg["ref"]:
        ref_domain = cfg["ref"]
        if ref_domain not in domain_metrics:
            raise ValidationError(f"report: reference domain '{ref_domain}' not found")
        if not args.out_normalized:
            raise UsageError("report: --ref requires --out-normalized")
        norm_rows = []
        normalized = {}
        for s in series:
            if ref_domain not in s.values:
                continue
            normalized[s.name] = normalize_metric(s, s.values[ref_domain]).values
        norm_names = sorted(normalized)
        for d in domains:
            norm_rows.append([d] + [normalized[m].get(d) for m in norm_names])
        write_csv(args.out_normalized, ["domain"] + norm_names, norm_rows)
    if args.out_corr:
        full = [s for s in series if sorted(s.values) == domains]
        names, matrix = correlation_matrix(full)
        rows = [[name] + [float(v) for v in matrix[i]] for i, name in enumerate(names)]
        write_csv(args.out_corr, ["metric"] + names, rows)

    manifest = args.manifest or f"{args.out}.manifest.json"
    _write_manifest(manifest, "report", cfg, inputs, started)
    return 0


# ---------------------------------------------------------------------------
# parser wiring
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="driftbench", description=__doc__)
    parser.add_argument("--version", action="version", version=f"driftbench {__version__}")
    sub = parser.add_subparsers(dest="subcommand", metavar="|".join(SUBCOMMANDS))

    def common(p):
        p.add_argument("--config", help="TOML config file (flags override it)")
        p.add_argument("--manifest", help="run manifest path (default: next to --out)")
        p.add_argument("--threads", type=int, help="worker pool size (env DRIFTBENCH_THREADS)")

    p = sub.add_parser("eval", help="background-wise AP / D-ECE report (CSV)")
    common(p)
    p.add_argument("--dets", required=True, help="detections JSONL")
    p.add_argument("--gt", required=True, help="ground-truth JSONL")
    p.add_argument("--seg", required=True, help="directory of <frame_id>.pgm segmaps")
    p.add_argument("--iou", type=float, help="TP matching IoU threshold (default 0.5)")
    p.add_argument("--pass-id", type=int, help="which inference pass to evaluate (default 0)")
    p.add_argument("--metrics", help="comma list from {ap,dece} (default ap,dece)")
    p.add_argument("--domain", help="domain label for the CSV rows")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("dece", help="multivariate calibration error + per-cell CSV")
    common(p)
    p.add_argument("--dets", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--width", type=int, required=True, help="image width for normalization")
    p.add_argument("--height", type=int, required=True, help="image height for normalization")
    p.add_argument("--iou", type=float)
    p.add_argument("--pass-id", type=int)
    p.add_argument("--bins-score", type=int, help="score bins (default 10)")
    p.add_argument("--bins-cx", type=int, help="cx bins (default 5)")
    p.add_argument("--bins-cy", type=int, help="cy bins (default 5)")
    p.add_argument("--bins-w", type=int, help="w bins (default 5)")
    p.add_argument("--bins-h", type=int, help="h bins (default 5)")
    p.add_argument("--out", required=True, help="per-cell diagnostics CSV")
    p.set_defaults(func=_cmd_dece)

    p = sub.add_parser("mcdo-map", help="pixel-wise uncertainty maps and scalar")
    common(p)
    p.add_argument("--dets", required=True, help="detections JSONL with all passes")
    p.add_argument("--passes", type=int, help="number of passes (default 2)")
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--classes", type=int, help="number of foreground classes (default 1)")
    p.add_argument("--dump-maps", action="store_true", default=False,
                   help="also dump per-frame 16-bit PGM maps")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_mcdo_map)

    p = sub.add_parser("mcdo-nms", help="cross-pass association uncertainty")
    common(p)
    p.add_argument("--dets", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--passes", type=int, help="number of passes (default 2)")
    p.add_argument("--iou-assoc", type=float, help="association IoU threshold (default 0.5)")
    p.add_argument("--iou", type=float, help="TP matching IoU threshold (default 0.5)")
    p.add_argument("--out", required=True, help="output JSON")
    p.set_defaults(func=_cmd_mcdo_nms)

    p = sub.add_parser("klcorr", help="feature-distribution KL and metric correlations")
    common(p)
    p.add_argument("--features-src", help="source FVEC file")
    p.add_argument("--features-tgt", help="target FVEC file")
    p.add_argument("--bins", type=int, help="histogram bins (default 64)")
    p.add_argument("--metrics-csv", help="domain,metric,... CSV for the correlation matrix")
    p.add_argument("--out-corr", help="correlation matrix CSV output")
    p.set_defaults(func=_cmd_klcorr)

    p = sub.add_parser("uda-sim", help="desk-scale adversarial adaptation simulation")
    common(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--frames", type=int)
    p.add_argument("--passes", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--lambda", dest="lam", type=float, help="adversarial weight (default 0.1)")
    p.add_argument("--shift", type=float, help="target jitter offset in px (default 3)")
    p.add_argument("--grid", type=int)
    p.add_argument("--l-det", type=float, help="detection-loss stand-in (default 1.0)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_uda_sim)

    p = sub.add_parser("synthgen", help="deterministic synthetic fixtures")
    common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="PRNG seed (default 0)")
    p.add_argument("--frames", type=int, help="frame count (default 4)")
    p.add_argument("--width", type=int, help="image width (default 64)")
    p.add_argument("--height", type=int, help="image height (default 64)")
    p.add_argument("--classes", type=int, help="foreground classes (default 1)")
    p.add_argument("--objects", type=int, help="objects per frame (default 3)")
    p.add_argument("--passes", type=int, help="detection passes (default 1)")
    p.add_argument("--jitter-pos", type=float, help="corner jitter std, px (default 0)")
    p.add_argument("--jitter-score", type=float, help="score jitter std (default 0)")
    p.add_argument("--miss-sky", type=float, help="sky miss rate (default 0)")
    p.add_argument("--miss-tree", type=float, help="tree miss rate (default 0)")
    p.add_argument("--miss-ground", type=float, help="ground miss rate (default 0)")
    p.add_argument("--fp-rate", type=float, help="false-positive rate (default 0)")
    p.add_argument("--mix", help="sky,tree,ground fractions (default 0.4,0.3,0.3)")
    p.add_argument("--box-min", type=float, help="min box size, px (default 8)")
    p.add_argument("--box-max", type=float, help="max box size, px (default 16)")
    p.add_argument("--ladder", help="comma list of shift knobs; writes source/ + target_i/")
    p.add_argument("--feature-dim", type=int, help="feature vector dim (default 64)")
    p.set_defaults(func=_cmd_synthgen)

    p = sub.add_parser("report", help="combine per-domain metric JSONs into CSV tables")
    common(p)
    p.add_argument("--inputs", required=True, help="directory of <domain>.json metric files")
    p.add_argument("--grad-loss", help="directory of <domain>.jsonl grad-loss files")
    p.add_argument("--ref", help="reference domain for normalization")
    p.add_argument("--out", required=True, help="combined CSV")
    p.add_argument("--out-normalized", help="normalized CSV (requires --ref)")
    p.add_argument("--out-corr", help="correlation matrix CSV")
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "subcommand", None):
            parser.print_help()
            return 1
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (ValidationError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except BrokenPipeError:
        return 0


if __name__ == "__main__":
    sys.exit(main())
