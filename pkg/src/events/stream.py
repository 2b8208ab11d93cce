"""
Event and EventStream types plus time-reversal augmentation.

An ``EventStream`` wraps a packed numpy structured array with one record per
event (``x``, ``y``, ``t``, ``p``). Streams are validated once at construction
and treated as immutable afterwards.
"""

from dataclasses import dataclass
from typing import Iterable, Iterator, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..core.exceptions import ArgumentError
from .windows import Window

EVENT_DTYPE = np.dtype([("x", "<u2"), ("y", "<u2"), ("t", "<i8"), ("p", "i1")])


class Event(BaseModel):
    """Single polarity spike ``(x, y, t, p)``."""
    model_config = ConfigDict(frozen=True)

    x: int = Field(..., ge=0, le=65535, description="Pixel column")
    y: int = Field(..., ge=0, le=65535, description="Pixel row")
    t: int = Field(..., description="Timestamp (µs)")
    p: Literal[-1, 1] = Field(..., description="Polarity")


def validate_event_array(events: np.ndarray, sensor_w: int, sensor_h: int) -> None:
    """
    Check the stream contract on a raw event array.

    Raises:
        ArgumentError: On out-of-bounds coordinates, bad polarity or
            unsorted timestamps
    """
    if events.size == 0:
        return
    if int(events["x"].max()) >= sensor_w or int(events["y"].max()) >= sensor_h:
        raise ArgumentError(
            "event coordinates outside the sensor",
            field="events",
            sensor_w=sensor_w,
            sensor_h=sensor_h,
        )
    polarity = events["p"]
    if not np.all((polarity == 1) | (polarity == -1)):
        raise ArgumentError("polarity must be -1 or +1", field="p")
    if np.any(np.diff(events["t"]) < 0):
        raise ArgumentError("event timestamps must be non-decreasing", field="t")


@dataclass(frozen=True, eq=False)
class EventStream:
    """
    Time-ordered events of one sensor.

    Attributes:
        events: Structured array with dtype ``EVENT_DTYPE``, sorted by ``t``
        sensor_w: Sensor width in pixels
        sensor_h: Sensor height in pixels
    """

    events: np.ndarray
    sensor_w: int
    sensor_h: int

    def __post_init__(self):
        if not (1 <= self.sensor_w <= 65535 and 1 <= self.sensor_h <= 65535):
            raise ArgumentError("sensor dimensions must lie in [1, 65535]", field="sensor")
        events = np.asarray(self.events)
        if events.dtype != EVENT_DTYPE:
            try:
                events = events.astype(EVENT_DTYPE)
            except (TypeError, ValueError) as exc:
                raise ArgumentError(f"cannot interpret events as {EVENT_DTYPE}: {exc}", field="events")
        events = np.ascontiguousarray(events).reshape(-1)
        validate_event_array(events, self.sensor_w, self.sensor_h)
        events.flags.writeable = False
        object.__setattr__(self, "events", events)

    @classmethod
    def empty(cls, sensor_w: int, sensor_h: int) -> "EventStream":
        return cls(np.zeros(0, dtype=EVENT_DTYPE), sensor_w, sensor_h)

    @classmethod
    def from_events(cls, events: Iterable[Event], sensor_w: int, sensor_h: int) -> "EventStream":
        """Build a stream from ``Event`` records (stable-sorted by ``t``)."""
        records = [(e.x, e.y, e.t, e.p) for e in events]
        array = np.array(records, dtype=EVENT_DTYPE)
        order = np.argsort(array["t"], kind="stable")
        return cls(array[order], sensor_w, sensor_h)

    @classmethod
    def from_columns(cls, x, y, t, p, sensor_w: int, sensor_h: int, sort: bool = True) -> "EventStream":
        """Build a stream from parallel column arrays."""
        array = np.empty(len(t), dtype=EVENT_DTYPE)
        array["x"] = x
        array["y"] = y
        array["t"] = t
        array["p"] = p
        if sort:
            array = array[np.argsort(array["t"], kind="stable")]
        return cls(array, sensor_w, sensor_h)

    def __len__(self) -> int:
        return int(self.events.shape[0])

    def __iter__(self) -> Iterator[Event]:
        for x, y, t, p in self.events.tolist():
            yield Event(x=x, y=y, t=t, p=p)

    def window_slice(self, window: Window) -> np.ndarray:
        """Events with ``t1 <= t < t2`` (a view, found by binary search)."""
        t = self.events["t"]
        lo = int(np.searchsorted(t, window.t1, side="left"))
        hi = int(np.searchsorted(t, window.t2, side="left"))
        return self.events[lo:hi]

    def count_in(self, window: Window) -> int:
        return int(self.window_slice(window).shape[0])

    def restrict(self, window: Window) -> "EventStream":
        """New stream holding only the events inside ``window``."""
        return EventStream(self.window_slice(window).copy(), self.sensor_w, self.sensor_h)


def reverse_stream(stream: EventStream, window: Window, flip_polarity: bool = True) -> EventStream:
    """
    Play the events of ``window`` backwards.

    Timestamps are reflected inside the half-open window
    (``t -> t1 + (t2 - 1 - t)``) and, by default, polarities are negated since
    a brightness ramp seen backwards changes sign. Events outside the window
    are dropped. Applying the function twice restores the in-window events.

    Args:
        stream: Time-sorted stream
        window: Interval to reverse
        flip_polarity: Negate polarities (``reverse_flips_polarity`` flag)

    Returns:
        Time-sorted reversed stream
    """
    if not window.t1 < window.t2:
        raise ArgumentError("window requires t1 < t2", field="window")
    selected = stream.window_slice(window)
    reversed_events = selected.copy()
    reversed_events["t"] = window.t1 + (window.t2 - 1 - selected["t"])
    if flip_polarity:
        reversed_events["p"] = -selected["p"]
    order = np.argsort(reversed_events["t"], kind="stable")
    return EventStream(reversed_events[order], stream.sensor_w, stream.sensor_h)
