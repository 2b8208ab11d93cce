"""
Named-tensor checkpoints.

Values are stored as one flat little-endian float64 file (``*.bin``) next to
a JSON sidecar (``*.json``) listing every tensor's name, shape, offset and
original dtype, the checkpoint ``kind`` and free-form metadata. Loading checks
the format version and that the value file matches the sidecar exactly.
"""

import json
from pathlib import Path
from typing import Any, Dict, Mapping, Tuple, Union

import numpy as np

from .exceptions import DataError
from .storage import atomic_write_bytes, atomic_write_json

FORMAT_VERSION = 1
VALUE_DTYPE = np.dtype("<f8")


def sidecar_path(path: Union[str, Path]) -> Path:
    return Path(path).with_suffix(".json")


def save_tensors(
    path: Union[str, Path],
    kind: str,
    tensors: Mapping[str, np.ndarray],
    meta: Dict[str, Any],
) -> Path:
    """
    Write ``tensors`` (in sorted name order) and their sidecar.

    Returns:
        Path of the value file
    """
    target = Path(path)
    entries = []
    chunks = []
    offset = 0
    for name in sorted(tensors):
        array = np.asarray(tensors[name])
        entries.append(
            {"name": name, "shape": list(array.shape), "offset": offset, "dtype": array.dtype.name}
        )
        chunks.append(array.astype(VALUE_DTYPE).ravel())
        offset += array.size
    values = np.concatenate(chunks) if chunks else np.zeros(0, dtype=VALUE_DTYPE)
    atomic_write_bytes(target, values.tobytes())
    atomic_write_json(
        sidecar_path(target),
        {
            "format_version": FORMAT_VERSION,
            "kind": kind,
            "value_count": int(offset),
            "tensors": entries,
            "meta": meta,
        },
    )
    return target


def read_sidecar(path: Union[str, Path]) -> Dict[str, Any]:
    """
    Parse and version-check the sidecar of ``path``.

    Raises:
        DataError: If the sidecar is missing, not JSON or of another version
    """
    sidecar = sidecar_path(path)
    try:
        document = json.loads(sidecar.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise DataError("checkpoint sidecar not found", path=str(sidecar)) from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"sidecar is not valid JSON: {exc.msg}", path=str(sidecar)) from exc
    if not isinstance(document, dict):
        raise DataError("sidecar must be a JSON object", path=str(sidecar))
    version = document.get("format_version")
    if version != FORMAT_VERSION:
        raise DataError(
            f"unsupported checkpoint format_version {version!r}", path=str(sidecar), field="format_version"
        )
    for key in ("kind", "value_count", "tensors", "meta"):
        if key not in document:
            raise DataError("missing sidecar key", path=str(sidecar), field=key)
    return document


def load_tensors(path: Union[str, Path], kind: str) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    """
    Read a checkpoint written by ``save_tensors``.

    Returns:
        ``(tensors, meta)`` with every tensor restored to its saved dtype

    Raises:
        DataError: On a kind mismatch or a value file that disagrees with
            the sidecar
    """
    target = Path(path)
    document = read_sidecar(target)
    if document["kind"] != kind:
        raise DataError(
            f"expected a '{kind}' checkpoint, found '{document['kind']}'", path=str(target), field="kind"
        )
    try:
        payload = target.read_bytes()
    except FileNotFoundError as exc:
        raise DataError("checkpoint value file not found", path=str(target)) from exc
    count = int(document["value_count"])
    if len(payload) != count * VALUE_DTYPE.itemsize:
        raise DataError(
            f"value file holds {len(payload)} bytes, sidecar declares {count} float64 values",
            path=str(target),
            field="value_count",
        )
    values = np.frombuffer(payload, dtype=VALUE_DTYPE)
    tensors = {}
    for index, entry in enumerate(document["tensors"]):
        try:
            shape = tuple(int(s) for s in entry["shape"])
            offset = int(entry["offset"])
            dtype = np.dtype(entry.get("dtype", "float64"))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed tensor entry: {exc}", path=str(target), field="tensors", record=index)
        size = int(np.prod(shape, dtype=np.int64))
        if offset < 0 or offset + size > count:
            raise DataError("tensor extends past the value file", path=str(target), field="tensors", record=index)
        tensors[entry["name"]] = values[offset:offset + size].reshape(shape).astype(dtype)
    return tensors, document["meta"]
