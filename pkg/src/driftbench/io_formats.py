"""Parsing and serialization of every external artifact.

Formats:
  * detections / ground truth / grad-loss scalars: JSON-Lines (UTF-8, LF),
    one frame(-pass) per line,
  * segmentation maps: binary PGM "P5" with maxval 255 and labels {0,1,2},
  * feature vectors: FVEC1, a fixed little-endian binary layout with a
    JSON sidecar (``<path>.frames.json``) holding per-row frame ids,
  * results: CSV with a header row, "." decimal separator, LF endings,
    and JSON reports with sorted keys.

All readers validate invariants and report the offending record; all
writers emit canonical bytes so that write(read(path)) reproduces any
file produced by this module byte for byte.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import ValidationError

BG_SKY = 0
BG_TREE = 1
BG_GROUND = 2
BG_LABELS = (BG_SKY, BG_TREE, BG_GROUND)
BG_NAMES = ("sky", "tree", "ground")

_FVEC_MAGIC = b"FVEC1"


@dataclass(frozen=True)
class Detection:
    """One predicted box: corner-format bbox, class label, confidence score."""

    bbox: tuple[float, float, float, float]
    class_id: int
    score: float


def _check_boxes(boxes: np.ndarray, where: str) -> None:
    if boxes.size == 0:
        return
    if not np.all(np.isfinite(boxes)):
        raise ValidationError(f"{where}: non-finite bbox coordinate")
    bad = np.nonzero((boxes[:, 2] <= boxes[:, 0]) | (boxes[:, 3] <= boxes[:, 1]))[0]
    if bad.size:
        raise ValidationError(f"{where}: degenerate box at index {bad[0]}")


class DetectionSet:
    """Column store for the detections of one frame/pass.

    Keeps boxes, class ids, and scores as parallel numpy arrays; this is
    the representation every metric kernel operates on.
    """

    __slots__ = ("boxes", "classes", "scores")

    def __init__(self, boxes, classes, scores, validate: bool = True):
        self.boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
        self.classes = np.asarray(classes, dtype=np.int64).reshape(-1)
        self.scores = np.asarray(scores, dtype=np.float64).reshape(-1)
        if validate:
            self._validate()

    def _validate(self) -> None:
        n = len(self.boxes)
        if len(self.classes) != n or len(self.scores) != n:
            raise ValidationError("detections: column length mismatch")
        _check_boxes(self.boxes, "detections")
        if n and (np.any(self.scores < 0.0) or np.any(self.scores > 1.0)):
            i = int(np.nonzero((self.scores < 0.0) | (self.scores > 1.0))[0][0])
            raise ValidationError(f"detections: score out of [0,1] at index {i}")
        if n and np.any(self.classes < 0):
            raise ValidationError("detections: negative class_id")

    @classmethod
    def empty(cls) -> "DetectionSet":
        return cls(np.empty((0, 4)), np.empty(0, dtype=np.int64), np.empty(0))

    @classmethod
    def from_detections(cls, dets: Iterable[Detection]) -> "DetectionSet":
        dets = list(dets)
        if not dets:
            return cls.empty()
        return cls(
            [d.bbox for d in dets],
            [d.class_id for d in dets],
            [d.score for d in dets],
        )

    def select(self, indices) -> "DetectionSet":
        idx = np.asarray(indices)
        return DetectionSet(
            self.boxes[idx], self.classes[idx], self.scores[idx], validate=False
        )

    def __len__(self) -> int:
        return len(self.scores)

    def __getitem__(self, i: int) -> Detection:
        return Detection(
            tuple(float(v) for v in self.boxes[i]),
            int(self.classes[i]),
            float(self.scores[i]),
        )

    def __iter__(self) -> Iterator[Detection]:
        for i in range(len(self)):
            yield self[i]


class GroundTruthSet:
    """Annotated boxes of one frame: boxes and class ids, no scores."""

    __slots__ = ("boxes", "classes")

    def __init__(self, boxes, classes, validate: bool = True):
        self.boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
        self.classes = np.asarray(classes, dtype=np.int64).reshape(-1)
        if validate:
            if len(self.boxes) != len(self.classes):
                raise ValidationError("ground truth: column length mismatch")
            _check_boxes(self.boxes, "ground truth")

    @classmethod
    def empty(cls) -> "GroundTruthSet":
        return cls(np.empty((0, 4)), np.empty(0, dtype=np.int64))

    def select(self, indices) -> "GroundTruthSet":
        idx = np.asarray(indices)
        return GroundTruthSet(self.boxes[idx], self.classes[idx], validate=False)

    def __len__(self) -> int:
        return len(self.classes)


@dataclass
class DetectionRecord:
    """All detections of one inference pass over one frame."""

    frame_id: str
    pass_id: int
    detections: DetectionSet


@dataclass
class GroundTruthRecord:
    frame_id: str
    boxes: GroundTruthSet


@dataclass
class SegMapImage:
    """Per-pixel background labels: 0=sky, 1=tree, 2=ground."""

    width: int
    height: int
    labels: np.ndarray  # (height, width) uint8

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.uint8)
        if self.labels.shape != (self.height, self.width):
            raise ValidationError(
                f"segmap: labels shape {self.labels.shape} does not match "
                f"{self.height}x{self.width}"
            )
        if self.labels.size and int(self.labels.max()) > BG_GROUND:
            raise ValidationError("segmap: unknown background label")


@dataclass
class FeatureVectorSet:
    """Pooled feature vectors of one domain, one row per frame."""

    domain_id: str
    dim: int
    vectors: np.ndarray  # (n, dim) float32
    frame_ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float32).reshape(-1, self.dim)
        if len(self.vectors) < 1:
            raise ValidationError(f"features '{self.domain_id}': empty feature set")
        if not np.all(np.isfinite(self.vectors)):
            raise ValidationError(f"features '{self.domain_id}': non-finite value")
        if len(self.frame_ids) != len(self.vectors):
            raise ValidationError(
                f"features '{self.domain_id}': {len(self.frame_ids)} frame_ids "
                f"for {len(self.vectors)} vectors"
            )


@dataclass
class GradLossRecord:
    """Precomputed per-detection gradient-loss scalars for one frame."""

    frame_id: str
    loc: np.ndarray  # (n,) float64, >= 0
    cls: np.ndarray  # (n,) float64, >= 0

    def __post_init__(self):
        self.loc = np.asarray(self.loc, dtype=np.float64).reshape(-1)
        self.cls = np.asarray(self.cls, dtype=np.float64).reshape(-1)
        if len(self.loc) != len(self.cls):
            raise ValidationError(f"grad-loss '{self.frame_id}': column length mismatch")
        for name, arr in (("loc", self.loc), ("cls", self.cls)):
            if arr.size and (not np.all(np.isfinite(arr)) or np.any(arr < 0)):
                raise ValidationError(
                    f"grad-loss '{self.frame_id}': negative or non-finite {name} value"
                )


# ---------------------------------------------------------------------------
# JSON-Lines detections / ground truth / grad-loss
# ---------------------------------------------------------------------------


def _iter_jsonl(path) -> Iterator[tuple[int, dict]]:
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}: line {lineno}: malformed JSON ({exc.msg})")
            if not isinstance(obj, dict):
                raise ValidationError(f"{path}: line {lineno}: expected a JSON object")
            yield lineno, obj


def _parse_bbox(raw, where: str) -> tuple[float, float, float, float]:
    if not isinstance(raw, (list, tuple)) or len(raw) != 4:
        raise ValidationError(f"{where}: bbox must be 4 numbers")
    x1, y1, x2, y2 = (float(v) for v in raw)
    if not all(np.isfinite(v) for v in (x1, y1, x2, y2)):
        raise ValidationError(f"{where}: non-finite bbox coordinate")
    if x2 <= x1 or y2 <= y1:
        raise ValidationError(f"{where}: degenerate box {raw}")
    return (x1, y1, x2, y2)


def read_detections(path) -> list[DetectionRecord]:
    """Read a JSONL detections file, one (frame, pass) record per line.

    Raises ValidationError on malformed JSON (with line number), invariant
    violations (with frame_id/pass_id), or duplicate (frame_id, pass_id).
    """
    records: list[DetectionRecord] = []
    seen: set[tuple[str, int]] = set()
    for lineno, obj in _iter_jsonl(path):
        try:
            frame_id = str(obj["frame_id"])
            pass_id = int(obj["pass_id"])
            raw_dets = obj["detections"]
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"{path}: line {lineno}: missing/invalid field ({exc})")
        if pass_id < 0:
            raise ValidationError(
                f"{path}: line {lineno}: negative pass_id for frame '{frame_id}'"
            )
        key = (frame_id, pass_id)
        if key in seen:
            raise ValidationError(
                f"{path}: line {lineno}: duplicate (frame_id, pass_id) = "
                f"('{frame_id}', {pass_id})"
            )
        seen.add(key)
        where = f"{path}: line {lineno}: frame '{frame_id}' pass {pass_id}"
        if not isinstance(raw_dets, list):
            raise ValidationError(f"{where}: detections must be a list")
        dets = []
        for d in raw_dets:
            if not isinstance(d, dict):
                raise ValidationError(f"{where}: each detection must be an object")
            bbox = _parse_bbox(d.get("bbox"), where)
            class_id = int(d.get("class_id", -1))
            score = float(d.get("score", -1.0))
            if class_id < 0:
                raise ValidationError(f"{where}: missing or negative class_id")
            if not (0.0 <= score <= 1.0):
                raise ValidationError(f"{where}: score {score} out of [0,1]")
            dets.append(Detection(bbox, class_id, score))
        records.append(DetectionRecord(frame_id, pass_id, DetectionSet.from_detections(dets)))
    return records


def write_detections(records: Sequence[DetectionRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            obj = {
                "frame_id": rec.frame_id,
                "pass_id": rec.pass_id,
                "detections": [
                    {"bbox": list(d.bbox), "class_id": d.class_id, "score": d.score}
                    for d in rec.detections
                ],
            }
            fh.write(json.dumps(obj, separators=(",", ":")) + "\n")


def read_ground_truth(path) -> list[GroundTruthRecord]:
    """Read a JSONL ground-truth file, one frame per line."""
    records: list[GroundTruthRecord] = []
    seen: set[str] = set()
    for lineno, obj in _iter_jsonl(path):
        try:
            frame_id = str(obj["frame_id"])
            raw_boxes = obj["boxes"]
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"{path}: line {lineno}: missing/invalid field ({exc})")
        if frame_id in seen:
            raise ValidationError(f"{path}: line {lineno}: duplicate frame_id '{frame_id}'")
        seen.add(frame_id)
        where = f"{path}: line {lineno}: frame '{frame_id}'"
        if not isinstance(raw_boxes, list):
            raise ValidationError(f"{where}: boxes must be a list")
        boxes, classes = [], []
        for b in raw_boxes:
            if not isinstance(b, dict):
                raise ValidationError(f"{where}: each box must be an object")
            boxes.append(_parse_bbox(b.get("bbox"), where))
            class_id = int(b.get("class_id", -1))
            if class_id < 0:
                raise ValidationError(f"{where}: missing or negative class_id")
            classes.append(class_id)
        records.append(
            GroundTruthRecord(
                frame_id,
                GroundTruthSet(
                    np.array(boxes).reshape(-1, 4), np.array(classes, dtype=np.int64)
                ),
            )
        )
    return records


def write_ground_truth(records: Sequence[GroundTruthRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            obj = {
                "frame_id": rec.frame_id,
                "boxes": [
                    {"bbox": [float(v) for v in box], "class_id": int(cls)}
                    for box, cls in zip(rec.boxes.boxes, rec.boxes.classes)
                ],
            }
            fh.write(json.dumps(obj, separators=(",", ":")) + "\n")


def read_grad_loss(path) -> list[GradLossRecord]:
    """Read a JSONL grad-loss file with per-detection {loc, cls} scalars."""
    records = []
    for lineno, obj in _iter_jsonl(path):
        try:
            frame_id = str(obj["frame_id"])
            raw = obj["grad_loss"]
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"{path}: line {lineno}: missing/invalid field ({exc})")
        try:
            loc = [float(g["loc"]) for g in raw]
            cls = [float(g["cls"]) for g in raw]
        except (KeyError, TypeError, ValueError):
            raise ValidationError(
                f"{path}: line {lineno}: frame '{frame_id}': each entry needs loc and cls"
            )
        try:
            records.append(GradLossRecord(frame_id, np.array(loc), np.array(cls)))
        except ValidationError as exc:
            raise ValidationError(f"{path}: line {lineno}: {exc}")
    return records


def write_grad_loss(records: Sequence[GradLossRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            obj = {
                "frame_id": rec.frame_id,
                "grad_loss": [
                    {"loc": float(l), "cls": float(c)} for l, c in zip(rec.loc, rec.cls)
                ],
            }
            fh.write(json.dumps(obj, separators=(",", ":")) + "\n")


# ---------------------------------------------------------------------------
# PGM segmentation maps
# ---------------------------------------------------------------------------


def _read_pgm_header(data: bytes, path) -> tuple[int, int, int, int]:
    """Parse a P5 header; returns (width, height, maxval, payload offset)."""
    if not data.startswith(b"P5"):
        raise ValidationError(f"{path}: not a binary PGM (missing P5 magic)")
    pos = 2
    fields: list[int] = []
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValidationError(f"{path}: truncated PGM header")
        try:
            fields.append(int(data[start:pos]))
        except ValueError:
            raise ValidationError(f"{path}: bad PGM header token {data[start:pos]!r}")
    # exactly one whitespace byte separates the header from the payload
    pos += 1
    width, height, maxval = fields
    return width, height, maxval, pos


def read_segmap(path) -> SegMapImage:
    """Read a P5 PGM whose pixels are background labels in {0, 1, 2}."""
    data = Path(path).read_bytes()
    width, height, maxval, offset = _read_pgm_header(data, path)
    if maxval != 255:
        raise ValidationError(f"{path}: segmap PGM must have maxval 255, got {maxval}")
    expected = width * height
    payload = data[offset : offset + expected]
    if len(payload) != expected:
        raise ValidationError(
            f"{path}: truncated payload at byte {offset + len(payload)} "
            f"(expected {expected} pixels)"
        )
    labels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width)
    bad = np.nonzero(labels > BG_GROUND)
    if bad[0].size:
        y, x = int(bad[0][0]), int(bad[1][0])
        raise ValidationError(
            f"{path}: unknown background label {int(labels[y, x])} at pixel ({x}, {y})"
        )
    return SegMapImage(width, height, labels)


def write_segmap(seg: SegMapImage, path) -> None:
    header = f"P5\n{seg.width} {seg.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + seg.labels.astype(np.uint8).tobytes())


def write_pgm16(values: np.ndarray, path) -> None:
    """Write a 16-bit P5 PGM (maxval 65535, big-endian samples)."""
    arr = np.asarray(values, dtype=np.uint16)
    if arr.ndim != 2:
        raise ValidationError("pgm16: expected a 2-D array")
    header = f"P5\n{arr.shape[1]} {arr.shape[0]}\n65535\n".encode("ascii")
    Path(path).write_bytes(header + arr.astype(">u2").tobytes())


def read_pgm16(path) -> np.ndarray:
    data = Path(path).read_bytes()
    width, height, maxval, offset = _read_pgm_header(data, path)
    if maxval != 65535:
        raise ValidationError(f"{path}: expected 16-bit PGM (maxval 65535), got {maxval}")
    expected = width * height * 2
    payload = data[offset : offset + expected]
    if len(payload) != expected:
        raise ValidationError(f"{path}: truncated payload")
    return np.frombuffer(payload, dtype=">u2").reshape(height, width).astype(np.uint16)


# ---------------------------------------------------------------------------
# FVEC1 feature vectors
# ---------------------------------------------------------------------------


def _sidecar_path(path) -> Path:
    return Path(str(path) + ".frames.json")


def read_features(path, domain_id: str | None = None) -> FeatureVectorSet:
    """Read an FVEC1 file plus its frame-id sidecar.

    Layout: magic "FVEC1", u32 n, u32 dim (little-endian), then n*dim
    little-endian float32. domain_id defaults to the file stem.
    """
    data = Path(path).read_bytes()
    if data[:5] != _FVEC_MAGIC:
        raise ValidationError(f"{path}: bad magic {data[:5]!r} (expected FVEC1)")
    if len(data) < 13:
        raise ValidationError(f"{path}: truncated header")
    n, dim = struct.unpack_from("<II", data, 5)
    if n == 0:
        raise ValidationError(f"{path}: empty feature set")
    expected = 13 + 4 * n * dim
    if len(data) != expected:
        raise ValidationError(
            f"{path}: size mismatch, header says {n}x{dim} "
            f"({expected} bytes) but file has {len(data)} bytes"
        )
    vectors = np.frombuffer(data, dtype="<f4", count=n * dim, offset=13).reshape(n, dim)
    if not np.all(np.isfinite(vectors)):
        raise ValidationError(f"{path}: non-finite feature value")
    sidecar = _sidecar_path(path)
    if not sidecar.exists():
        raise ValidationError(f"{path}: missing frame-id sidecar {sidecar}")
    frame_ids = json.loads(sidecar.read_text(encoding="utf-8"))
    if not isinstance(frame_ids, list) or len(frame_ids) != n:
        raise ValidationError(f"{sidecar}: expected a JSON array of {n} frame ids")
    if domain_id is None:
        domain_id = Path(path).stem
    return FeatureVectorSet(domain_id, int(dim), np.array(vectors), [str(f) for f in frame_ids])


def write_features(fset: FeatureVectorSet, path) -> None:
    vectors = np.ascontiguousarray(fset.vectors, dtype="<f4")
    n, dim = vectors.shape
    with open(path, "wb") as fh:
        fh.write(_FVEC_MAGIC)
        fh.write(struct.pack("<II", n, dim))
        fh.write(vectors.tobytes())
    _sidecar_path(path).write_text(
        json.dumps(list(fset.frame_ids), separators=(",", ":")) + "\n", encoding="utf-8"
    )


# ---------------------------------------------------------------------------
# Result reports
# ---------------------------------------------------------------------------


def format_cell(value) -> str:
    """CSV cell: absent values are empty, floats use '.' and full precision."""
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(format_cell(v) for v in row) + "\n")


def write_json_report(path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
