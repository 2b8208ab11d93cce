"""
Dense 4D event tensor (polarity x time-bin x H x W).

Every event of ``[t1, t2)`` adds one count at channel ``p == +1``, bin
``floor((t - t1) / (t2 - t1) * T)`` and its pixel. The bin index is computed in
integer arithmetic and clamped to ``T - 1`` so an in-window event is never
dropped.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..core.exceptions import ArgumentError
from .stream import EventStream
from .windows import Window


class VoxelSpec(BaseModel):
    """Temporal bins ``T`` and spatial size ``H x W``."""
    model_config = ConfigDict(frozen=True)

    T: int = Field(..., ge=1, description="Number of temporal bins")
    H: int = Field(..., ge=1, description="Height (pixels)")
    W: int = Field(..., ge=1, description="Width (pixels)")

    @property
    def shape(self):
        return (2, self.T, self.H, self.W)


@dataclass(frozen=True, eq=False)
class EventTensor:
    """
    Event counts of one window.

    Attributes:
        data: int64 array of shape ``(2, T, H, W)``; channel 0 holds negative
            and channel 1 positive polarity
        spec: Voxel specification
        window: The voxelized window
    """

    data: np.ndarray
    spec: VoxelSpec
    window: Window

    def __post_init__(self):
        if self.data.shape != self.spec.shape:
            raise ArgumentError(
                f"tensor shape {self.data.shape} does not match {self.spec.shape}",
                field="data",
            )

    @property
    def total(self) -> int:
        return int(self.data.sum())

    @classmethod
    def zeros(cls, spec: VoxelSpec, window: Window) -> "EventTensor":
        return cls(np.zeros(spec.shape, dtype=np.int64), spec, window)


def voxelize(
    stream: EventStream,
    window: Window,
    spec: VoxelSpec,
    chunk_size: Optional[int] = None,
) -> EventTensor:
    """
    Bin the events of ``window`` into a count tensor.

    Args:
        stream: Time-sorted event stream
        window: Half-open interval to voxelize
        spec: Bin count and spatial size; must equal the sensor size
        chunk_size: Optional partition size; partial count tensors are summed,
            which gives exactly the same result

    Returns:
        EventTensor whose entries sum to the number of in-window events

    Raises:
        ArgumentError: On an invalid window, a spec that does not match the
            sensor, or out-of-bounds event coordinates
    """
    if not window.t1 < window.t2:
        raise ArgumentError("window requires t1 < t2", field="window")
    if spec.T < 1 or spec.H < 1 or spec.W < 1:
        raise ArgumentError("voxel spec dimensions must be positive", field="spec")
    if spec.H != stream.sensor_h or spec.W != stream.sensor_w:
        raise ArgumentError(
            f"voxel spec {spec.H}x{spec.W} does not match sensor {stream.sensor_h}x{stream.sensor_w}",
            field="spec",
        )

    selected = stream.window_slice(window)
    size = 2 * spec.T * spec.H * spec.W
    if chunk_size is None or chunk_size >= selected.shape[0]:
        counts = _bin_counts(selected, window, spec, size)
    else:
        counts = np.zeros(size, dtype=np.int64)
        for start in range(0, selected.shape[0], chunk_size):
            counts += _bin_counts(selected[start:start + chunk_size], window, spec, size)
    return EventTensor(counts.reshape(spec.shape), spec, window)


def _bin_counts(events: np.ndarray, window: Window, spec: VoxelSpec, size: int) -> np.ndarray:
    if events.shape[0] == 0:
        return np.zeros(size, dtype=np.int64)
    x = events["x"].astype(np.int64)
    y = events["y"].astype(np.int64)
    if int(x.max()) >= spec.W or int(y.max()) >= spec.H:
        raise ArgumentError("event coordinates outside the voxel grid", field="events")
    elapsed = events["t"].astype(np.int64) - window.t1
    bins = np.minimum((elapsed * spec.T) // (window.t2 - window.t1), spec.T - 1)
    channel = (events["p"] > 0).astype(np.int64)
    flat = ((channel * spec.T + bins) * spec.H + y) * spec.W + x
    return np.bincount(flat, minlength=size).astype(np.int64, copy=False)
