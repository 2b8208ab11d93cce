"""
EVT1 binary event files.

Layout (little-endian)::

    offset  size  field
    0       4     magic "EVT1"
    4       2     u16 sensor_w
    6       2     u16 sensor_h
    8       4     u32 event_count
    12      4     u32 reserved (0)
    16      13*n  records: u16 x, u16 y, i64 t (µs), i8 p (-1/+1)

Records map one-to-one onto ``EVENT_DTYPE``, which numpy lays out packed, so
reading and writing are single buffer copies.
"""

import struct
from pathlib import Path
from typing import Union

import numpy as np

from ..core.exceptions import ArgumentError, DataError
from ..core.logging import get_logger
from ..core.storage import atomic_write_bytes
from .stream import EVENT_DTYPE, EventStream

logger = get_logger(__name__)

MAGIC = b"EVT1"
HEADER = struct.Struct("<4sHHII")
RECORD_SIZE = EVENT_DTYPE.itemsize


def encode_evt1(stream: EventStream) -> bytes:
    """Serialize a stream to EVT1 bytes."""
    header = HEADER.pack(MAGIC, stream.sensor_w, stream.sensor_h, len(stream), 0)
    return header + stream.events.astype(EVENT_DTYPE, copy=False).tobytes()


def decode_evt1(payload: bytes, source: str = "<bytes>") -> EventStream:
    """
    Parse EVT1 bytes.

    Raises:
        DataError: On a bad magic, truncated payload, invalid records or
            unsorted timestamps
    """
    if len(payload) < HEADER.size:
        raise DataError("file shorter than the EVT1 header", path=source, field="header")
    magic, sensor_w, sensor_h, count, _reserved = HEADER.unpack_from(payload, 0)
    if magic != MAGIC:
        raise DataError(f"bad magic {magic!r}", path=source, field="magic")
    expected = HEADER.size + count * RECORD_SIZE
    if len(payload) != expected:
        raise DataError(
            f"expected {expected} bytes for {count} events, found {len(payload)}",
            path=source,
            field="event_count",
        )
    events = np.frombuffer(payload, dtype=EVENT_DTYPE, count=count, offset=HEADER.size)
    if count and np.any(np.diff(events["t"]) < 0):
        record = int(np.argmax(np.diff(events["t"]) < 0)) + 1
        raise DataError("timestamps are not sorted", path=source, field="t", record=record)
    try:
        return EventStream(events.copy(), sensor_w, sensor_h)
    except ArgumentError as exc:
        raise DataError(exc.detail, path=source, field=exc.field) from exc


def write_evt1(path: Union[str, Path], stream: EventStream) -> Path:
    """Write ``stream`` to ``path`` atomically."""
    target = atomic_write_bytes(path, encode_evt1(stream))
    logger.debug(f"Wrote {len(stream)} events to {target}")
    return target


def read_evt1(path: Union[str, Path]) -> EventStream:
    """Read an EVT1 file."""
    payload = Path(path).read_bytes()
    stream = decode_evt1(payload, source=str(path))
    logger.debug(f"Read {len(stream)} events ({stream.sensor_w}x{stream.sensor_h}) from {path}")
    return stream
