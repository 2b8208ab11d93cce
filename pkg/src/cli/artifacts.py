"""
Artifact files written and read by the command line.

Formats (documented with golden examples under ``docs/formats``):

- labels JSON: ground-truth boxes keyed by timestamp
- detections JSON: scored boxes keyed by timestamp
- pseudo-label JSONL: one refined sub-window per line
- PGM (P5, 16-bit): intensity frames
- tensor NPZ: voxelized window with its bounds
- EVT1, checkpoints (``.bin`` + sidecar) and metrics CSV come from their
  own modules and are only detected here for ``inspect``
"""

import io
import json
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import ValidationError

from ..core.checkpoint import read_sidecar, sidecar_path
from ..core.exceptions import ArgumentError, DataError
from ..core.logging import get_logger
from ..core.models import Detection, GroundTruthBox
from ..core.storage import atomic_write_bytes, atomic_write_json, atomic_write_text
from ..evaluation.coco import EvalBundle, coco_map
from ..events.evt_format import MAGIC, read_evt1
from ..events.voxel import EventTensor, VoxelSpec
from ..events.windows import Window
from ..flextune.calibration import PseudoLabelSet

logger = get_logger(__name__)

SCHEMA_VERSION = 1
LABELS_FORMAT = "flexevent.labels"
DETECTIONS_FORMAT = "flexevent.detections"
PSEUDO_FORMAT = "flexevent.pseudo_labels"
PGM_MAXVAL = 65535
PGM_SCALE = 16384.0
BOX_FIELDS = ("x_min", "y_min", "x_max", "y_max")

PathLike = Union[str, Path]
LabelSets = Dict[int, List[GroundTruthBox]]
DetectionSets = Dict[int, List[Detection]]


def _box_record(box: Sequence[float]) -> Dict[str, float]:
    return dict(zip(BOX_FIELDS, (float(v) for v in box)))


def _read_json(path: PathLike) -> Optional[Any]:
    """Parsed document, or ``None`` for an empty file."""
    text = Path(path).read_text(encoding="utf-8")
    if not text.strip():
        return None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"invalid JSON: {exc.msg} at line {exc.lineno}", path=str(path)) from exc


def _number(raw: Mapping[str, Any], name: str, path: str, record: int, prefix: str, integer: bool = False):
    value = raw.get(name)
    valid = isinstance(value, int) if integer else isinstance(value, (int, float))
    if isinstance(value, bool) or not valid or (not integer and not np.isfinite(value)):
        kind = "an integer" if integer else "a finite number"
        raise DataError(f"expected {kind}, got {value!r}", path=path, field=f"{prefix}{name}", record=record)
    return value


def _parse_corners(raw: Mapping[str, Any], path: str, record: int, prefix: str) -> Tuple[float, ...]:
    corners = tuple(float(_number(raw, name, path, record, prefix)) for name in BOX_FIELDS)
    if not corners[0] < corners[2]:
        raise DataError("x_min must be smaller than x_max", path=path, field=f"{prefix}x_min", record=record)
    if not corners[1] < corners[3]:
        raise DataError("y_min must be smaller than y_max", path=path, field=f"{prefix}y_min", record=record)
    return corners


def _records(document: Any, key: str, expected_format: str, path: str) -> List[Any]:
    if document is None:
        return []
    if not isinstance(document, dict):
        raise DataError("top level must be an object", path=path)
    if document.get("format", expected_format) != expected_format:
        raise DataError(f"expected format '{expected_format}', got {document.get('format')!r}", path=path, field="format")
    if document.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise DataError(f"unsupported schema_version {document.get('schema_version')!r}", path=path, field="schema_version")
    records = document.get(key, [])
    if not isinstance(records, list):
        raise DataError(f"'{key}' must be a list", path=path, field=key)
    return records


def _timestamped(records: List[Any], path: str) -> Iterable[Tuple[int, int, List[Any]]]:
    seen = set()
    for index, record in enumerate(records):
        if not isinstance(record, dict):
            raise DataError("record must be an object", path=path, record=index)
        t = _number(record, "t", path, index, "", integer=True)
        if t in seen:
            raise DataError(f"duplicate timestamp {t}", path=path, field="t", record=index)
        seen.add(t)
        boxes = record.get("boxes", [])
        if not isinstance(boxes, list):
            raise DataError("'boxes' must be a list", path=path, field="boxes", record=index)
        yield index, t, boxes


# Labels

def labels_document(labels: Mapping[int, Sequence[GroundTruthBox]]) -> Dict[str, Any]:
    return {
        "format": LABELS_FORMAT,
        "schema_version": SCHEMA_VERSION,
        "labels": [
            {
                "t": int(t),
                "boxes": [
                    {**_box_record(b.box), "class_id": b.class_id, "track_id": b.track_id} for b in labels[t]
                ],
            }
            for t in sorted(labels)
        ],
    }


def save_labels(path: PathLike, labels: Mapping[int, Sequence[GroundTruthBox]]) -> Path:
    """Write label sets keyed by timestamp (µs)."""
    return atomic_write_json(path, labels_document(labels))


def parse_labels(document: Any, source: str = "<labels>") -> LabelSets:
    """
    Validate a labels document.

    Raises:
        DataError: Naming the offending field and record index
    """
    labels: LabelSets = {}
    for index, t, boxes in _timestamped(_records(document, "labels", LABELS_FORMAT, source), source):
        parsed = []
        for position, raw in enumerate(boxes):
            prefix = f"boxes[{position}]."
            if not isinstance(raw, dict):
                raise DataError("box must be an object", path=source, field=prefix[:-1], record=index)
            corners = _parse_corners(raw, source, index, prefix)
            class_id = _number(raw, "class_id", source, index, prefix, integer=True)
            track_id = _number(raw, "track_id", source, index, prefix, integer=True)
            try:
                parsed.append(GroundTruthBox(box=corners, class_id=class_id, track_id=track_id))
            except ValidationError as exc:
                field = str(exc.errors()[0]["loc"][0]) if exc.errors()[0]["loc"] else "box"
                raise DataError(exc.errors()[0]["msg"], path=source, field=prefix + field, record=index) from exc
        labels[t] = parsed
    return labels


def load_labels(path: PathLike) -> LabelSets:
    """Read a labels JSON file; an empty file is an empty set."""
    labels = parse_labels(_read_json(path), str(path))
    logger.debug(f"Loaded {sum(len(b) for b in labels.values())} labels at {len(labels)} timestamps from {path}")
    return labels


# Detections

def detections_document(dets: Mapping[int, Sequence[Detection]]) -> Dict[str, Any]:
    return {
        "format": DETECTIONS_FORMAT,
        "schema_version": SCHEMA_VERSION,
        "detections": [
            {
                "t": int(t),
                "boxes": [{**_box_record(d.box), "class_id": d.class_id, "score": d.score} for d in dets[t]],
            }
            for t in sorted(dets)
        ],
    }


def save_detections(path: PathLike, dets: Mapping[int, Sequence[Detection]]) -> Path:
    return atomic_write_json(path, detections_document(dets))


def parse_detections(document: Any, source: str = "<detections>") -> DetectionSets:
    dets: DetectionSets = {}
    for index, t, boxes in _timestamped(_records(document, "detections", DETECTIONS_FORMAT, source), source):
        parsed = []
        for position, raw in enumerate(boxes):
            prefix = f"boxes[{position}]."
            if not isinstance(raw, dict):
                raise DataError("box must be an object", path=source, field=prefix[:-1], record=index)
            corners = _parse_corners(raw, source, index, prefix)
            class_id = _number(raw, "class_id", source, index, prefix, integer=True)
            score = _number(raw, "score", source, index, prefix)
            try:
                parsed.append(Detection(box=corners, class_id=class_id, score=score, t=t))
            except ValidationError as exc:
                field = str(exc.errors()[0]["loc"][0]) if exc.errors()[0]["loc"] else "box"
                raise DataError(exc.errors()[0]["msg"], path=source, field=prefix + field, record=index) from exc
        dets[t] = parsed
    return dets


def load_detections(path: PathLike) -> DetectionSets:
    return parse_detections(_read_json(path), str(path))


# Pseudo-labels

def pseudo_label_lines(sets: Mapping[int, PseudoLabelSet]) -> List[Dict[str, Any]]:
    """
    One record per refined sub-window::

        {"sequence_id", "window": [t1, t2],
         "labels": [{"box": [x_min, y_min, x_max, y_max], "class_id", "track_id"}],
         "format", "interval", "window_index", "scores"}

    ``scores`` is aligned with ``labels``.
    """
    lines = []
    for position in sorted(sets):
        labels = sets[position]
        for index in sorted(labels.labels):
            window = labels.windows[index] if index < len(labels.windows) else None
            lines.append(
                {
                    "format": PSEUDO_FORMAT,
                    "sequence_id": labels.sequence_id,
                    "interval": int(position),
                    "window_index": int(index),
                    "window": [window.t1, window.t2] if window else None,
                    "labels": [
                        {"box": [float(v) for v in b.box], "class_id": b.class_id, "track_id": b.track_id}
                        for b in labels.labels[index]
                    ],
                    "scores": [float(s) for s in labels.scores.get(index, [])],
                }
            )
    return lines


def save_pseudo_labels(path: PathLike, sets: Mapping[int, PseudoLabelSet]) -> Path:
    """One JSON object per refined sub-window."""
    text = "".join(json.dumps(line, sort_keys=True) + "\n" for line in pseudo_label_lines(sets))
    return atomic_write_text(path, text)


def _pseudo_window(record: Mapping[str, Any], path: str, index: int) -> Optional[Window]:
    value = record.get("window")
    if value is None:
        return None
    valid = isinstance(value, list) and len(value) == 2
    if not valid or any(isinstance(v, bool) or not isinstance(v, int) for v in value):
        raise DataError(f"window must be [t1, t2] integers, got {value!r}", path=path, field="window", record=index)
    if not value[0] < value[1]:
        raise DataError(f"window requires t1 < t2, got {value!r}", path=path, field="window", record=index)
    return Window(t1=value[0], t2=value[1])


def _pseudo_label(raw: Any, path: str, index: int, prefix: str) -> GroundTruthBox:
    if not isinstance(raw, dict):
        raise DataError("label must be an object", path=path, field=prefix[:-1], record=index)
    box = raw.get("box")
    if not isinstance(box, list) or len(box) != 4:
        raise DataError(f"box must be four numbers, got {box!r}", path=path, field=f"{prefix}box", record=index)
    corners = _parse_corners(dict(zip(BOX_FIELDS, box)), path, index, f"{prefix}box.")
    class_id = _number(raw, "class_id", path, index, prefix, integer=True)
    track_id = _number(raw, "track_id", path, index, prefix, integer=True)
    try:
        return GroundTruthBox(box=corners, class_id=class_id, track_id=track_id)
    except ValidationError as exc:
        field = str(exc.errors()[0]["loc"][0]) if exc.errors()[0]["loc"] else "box"
        raise DataError(exc.errors()[0]["msg"], path=path, field=prefix + field, record=index) from exc


def load_pseudo_labels(path: PathLike) -> List[Dict[str, Any]]:
    """
    Parse a JSONL dump, validating every record.

    ``format`` is optional; when present it must be the pseudo-label format.
    Returned records carry ``window`` as a ``Window`` (or ``None``) and
    ``labels`` as ``GroundTruthBox`` lists; other keys are passed through.

    Raises:
        DataError: Naming the offending field and line index
    """
    records = []
    source = str(path)
    for index, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines()):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"invalid JSON: {exc.msg}", path=source, record=index) from exc
        if not isinstance(record, dict) or record.get("format", PSEUDO_FORMAT) != PSEUDO_FORMAT:
            raise DataError("not a pseudo-label record", path=source, field="format", record=index)
        if not isinstance(record.get("sequence_id"), str):
            raise DataError("sequence_id must be a string", path=source, field="sequence_id", record=index)
        raw_labels = record.get("labels")
        if not isinstance(raw_labels, list):
            raise DataError("'labels' must be a list", path=source, field="labels", record=index)
        parsed = dict(record)
        parsed["window"] = _pseudo_window(record, source, index)
        parsed["labels"] = [
            _pseudo_label(raw, source, index, f"labels[{position}].") for position, raw in enumerate(raw_labels)
        ]
        records.append(parsed)
    return records


# PGM frames

def encode_pgm(image: np.ndarray) -> bytes:
    """16-bit binary PGM; intensities are stored as ``round(I * 16384)``."""
    if image.ndim != 2:
        raise ArgumentError(f"frame must be 2-D, got shape {image.shape}", field="image")
    levels = np.clip(np.round(np.asarray(image, dtype=np.float64) * PGM_SCALE), 0, PGM_MAXVAL).astype(">u2")
    height, width = image.shape
    return f"P5\n{width} {height}\n{PGM_MAXVAL}\n".encode("ascii") + levels.tobytes()


def decode_pgm(payload: bytes, source: str = "<pgm>") -> np.ndarray:
    """
    Parse a P5 PGM (8- or 16-bit) written by ``encode_pgm``.

    Raises:
        DataError: On a bad header or size
    """
    tokens = []
    position = 0
    while len(tokens) < 4:
        while position < len(payload) and payload[position:position + 1].isspace():
            position += 1
        if payload[position:position + 1] == b"#":
            position = payload.find(b"\n", position) + 1 or len(payload)
            continue
        start = position
        while position < len(payload) and not payload[position:position + 1].isspace():
            position += 1
        if start == position:
            raise DataError("truncated PGM header", path=source, field="header")
        tokens.append(payload[start:position])
    position += 1
    if tokens[0] != b"P5":
        raise DataError(f"bad magic {tokens[0]!r}", path=source, field="magic")
    try:
        width, height, maxval = (int(token) for token in tokens[1:])
    except ValueError as exc:
        raise DataError("non-integer PGM header field", path=source, field="header") from exc
    if not 0 < maxval <= PGM_MAXVAL:
        raise DataError(f"maxval {maxval} out of range", path=source, field="maxval")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    expected = width * height * dtype.itemsize
    if len(payload) - position != expected:
        raise DataError(f"expected {expected} pixel bytes, found {len(payload) - position}", path=source, field="pixels")
    levels = np.frombuffer(payload, dtype=dtype, offset=position).reshape(height, width)
    return (levels.astype(np.float64) / PGM_SCALE).astype(np.float32)


def write_pgm(path: PathLike, image: np.ndarray) -> Path:
    return atomic_write_bytes(path, encode_pgm(image))


def read_pgm(path: PathLike) -> np.ndarray:
    return decode_pgm(Path(path).read_bytes(), str(path))


# Tensors

def save_tensor(path: PathLike, tensor: EventTensor) -> Path:
    buffer = io.BytesIO()
    np.savez(buffer, data=tensor.data, window=np.array([tensor.window.t1, tensor.window.t2], dtype=np.int64))
    return atomic_write_bytes(path, buffer.getvalue())


def load_tensor(path: PathLike) -> EventTensor:
    try:
        with np.load(Path(path), allow_pickle=False) as archive:
            data = archive["data"]
            t1, t2 = (int(v) for v in archive["window"])
    except (KeyError, ValueError, OSError) as exc:
        raise DataError(f"not a tensor archive: {exc}", path=str(path)) from exc
    if data.ndim != 4 or data.shape[0] != 2:
        raise DataError(f"tensor shape {data.shape} is not (2, T, H, W)", path=str(path), field="data")
    spec = VoxelSpec(T=data.shape[1], H=data.shape[2], W=data.shape[3])
    return EventTensor(data.astype(np.int64), spec, Window.checked(t1, t2))


# Inspection

def detect_kind(path: PathLike) -> str:
    """Guess the artifact kind from its content and suffix."""
    target = Path(path)
    head = target.read_bytes()[:8]
    if head.startswith(MAGIC):
        return "evt1"
    if head.startswith(b"P5"):
        return "pgm"
    if head.startswith(b"PK"):
        return "tensor"
    if target.suffix == ".bin" and sidecar_path(target).exists():
        return "checkpoint"
    if target.suffix == ".jsonl":
        return "pseudo_labels"
    if target.suffix == ".csv":
        return "csv"
    if target.suffix == ".json":
        document = _read_json(target)
        if isinstance(document, dict):
            if document.get("format") == DETECTIONS_FORMAT:
                return "detections"
            if document.get("format") == LABELS_FORMAT or "labels" in document:
                return "labels"
            if "format_version" in document and "tensors" in document:
                return "checkpoint_sidecar"
            if "schema_version" in document and "training" in document:
                return "experiment"
            if "objects" in document and "sensor_w" in document:
                return "scene"
        return "json"
    raise DataError("unrecognised artifact", path=str(target))


def inspect_artifact(path: PathLike) -> Dict[str, Any]:
    """
    Parse any artifact and summarise it.

    Raises:
        DataError: If the file does not parse as its detected kind
    """
    from .experiment import load_experiment, load_scene_config

    target = Path(path)
    kind = detect_kind(target)
    summary: Dict[str, Any] = {"path": str(target), "kind": kind}
    if kind == "evt1":
        stream = read_evt1(target)
        t = stream.events["t"]
        summary.update(
            sensor_w=stream.sensor_w,
            sensor_h=stream.sensor_h,
            events=len(stream),
            t_min=int(t[0]) if len(stream) else None,
            t_max=int(t[-1]) if len(stream) else None,
            positive=int((stream.events["p"] > 0).sum()),
        )
    elif kind == "pgm":
        image = read_pgm(target)
        summary.update(width=image.shape[1], height=image.shape[0], mean=float(image.mean()))
    elif kind == "tensor":
        tensor = load_tensor(target)
        summary.update(shape=list(tensor.data.shape), t1=tensor.window.t1, t2=tensor.window.t2, total=tensor.total)
    elif kind in ("checkpoint", "checkpoint_sidecar"):
        sidecar = read_sidecar(target)
        summary.update(
            checkpoint_kind=sidecar["kind"],
            tensors=len(sidecar["tensors"]),
            values=sidecar["value_count"],
            meta=sidecar["meta"],
        )
    elif kind == "labels":
        labels = load_labels(target)
        summary.update(timestamps=len(labels), boxes=sum(len(b) for b in labels.values()))
    elif kind == "detections":
        dets = load_detections(target)
        summary.update(timestamps=len(dets), detections=sum(len(d) for d in dets.values()))
    elif kind == "pseudo_labels":
        records = load_pseudo_labels(target)
        summary.update(windows=len(records), boxes=sum(len(r["labels"]) for r in records))
    elif kind == "experiment":
        config = load_experiment(target)
        summary.update(seed=config.training.seed, scene=config.scene, output_dir=config.output_dir)
    elif kind == "scene":
        scene = load_scene_config(target)
        summary.update(
            sensor_w=scene.sensor_w, sensor_h=scene.sensor_h, duration=scene.duration, objects=len(scene.objects)
        )
    elif kind == "csv":
        lines = target.read_text(encoding="utf-8").splitlines()
        summary.update(columns=lines[0].split(",") if lines else [], rows=max(0, len(lines) - 1))
    else:
        document = _read_json(target)
        summary.update(keys=sorted(document) if isinstance(document, dict) else None)
    return summary


def tensor_summary(tensor: EventTensor) -> Dict[str, Any]:
    """Counts of a voxelized window per polarity and per temporal bin."""
    return {
        "shape": list(tensor.data.shape),
        "t1": tensor.window.t1,
        "t2": tensor.window.t2,
        "total": tensor.total,
        "negative": int(tensor.data[0].sum()),
        "positive": int(tensor.data[1].sum()),
        "per_bin": [int(v) for v in tensor.data.sum(axis=(0, 2, 3))],
    }


def evaluate_documents(detections: Any, labels: Any) -> EvalBundle:
    """COCO metrics of a detections document against a labels document."""
    return coco_map(parse_detections(detections, "detections"), parse_labels(labels, "labels"))
