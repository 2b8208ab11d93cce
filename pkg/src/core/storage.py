"""
Atomic file output helpers.

Every artifact the toolkit writes goes through these functions: the payload is
written to a temporary file in the destination directory and renamed into
place, so readers never observe a half-written file.
"""

import json
import os
import tempfile
from pathlib import Path
from typing import Any, Union

PathLike = Union[str, "os.PathLike[str]"]


def atomic_write_bytes(path: PathLike, payload: bytes) -> Path:
    """
    Write ``payload`` to ``path`` atomically.

    Args:
        path: Destination file
        payload: Bytes to write

    Returns:
        The destination as a ``Path``
    """
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{target.name}.", dir=target.parent)
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(tmp_name, target)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    return target


def atomic_write_text(path: PathLike, text: str) -> Path:
    """Write UTF-8 text atomically."""
    return atomic_write_bytes(path, text.encode("utf-8"))


def atomic_write_json(path: PathLike, document: Any) -> Path:
    """Write a JSON document atomically (sorted keys, stable output)."""
    return atomic_write_text(path, json.dumps(document, indent=2, sort_keys=True) + "\n")
