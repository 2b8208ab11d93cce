"""
Half-open time windows and frequency slicing.

A labeled interval ``[t1, t2)`` at the base frequency is divided into
``ratio`` consecutive sub-windows at the high frequency. The last sub-window
ends on the labeled timestamp.
"""

from typing import List, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..core.exceptions import ArgumentError


class Window(BaseModel):
    """Half-open interval ``[t1, t2)`` in microseconds."""
    model_config = ConfigDict(frozen=True)

    t1: int = Field(..., description="Inclusive start (µs)")
    t2: int = Field(..., description="Exclusive end (µs)")

    @model_validator(mode="after")
    def check_order(self):
        # Not a ValueError, so pydantic lets it through unwrapped.
        if not self.t1 < self.t2:
            raise ArgumentError(f"window requires t1 < t2, got [{self.t1}, {self.t2})", field="window")
        return self

    @classmethod
    def checked(cls, t1: int, t2: int) -> "Window":
        """Build a window from integer-like bounds."""
        return cls(t1=int(t1), t2=int(t2))

    @property
    def duration(self) -> int:
        return self.t2 - self.t1

    def contains(self, t: int) -> bool:
        return self.t1 <= t < self.t2

    def reflect(self, outer: "Window") -> "Window":
        """Mirror image of this window inside ``outer`` (integer reflection)."""
        return Window(t1=outer.t1 + outer.t2 - self.t2, t2=outer.t1 + outer.t2 - self.t1)


class FrequencyPlan(BaseModel):
    """Labeled frequency ``base_hz`` and the target frequency ``high_hz``."""
    model_config = ConfigDict(frozen=True)

    base_hz: float = Field(..., gt=0, description="Labeled frequency a (Hz)")
    high_hz: float = Field(..., gt=0, description="Target frequency b (Hz)")
    ratio: int = Field(..., ge=1, description="b / a")

    @model_validator(mode="after")
    def check_ratio(self):
        if abs(self.high_hz - self.base_hz * self.ratio) > 1e-9 * self.high_hz:
            raise ValueError(
                f"high_hz ({self.high_hz}) must equal base_hz ({self.base_hz}) x ratio ({self.ratio})"
            )
        return self

    @classmethod
    def from_rates(cls, base_hz: float, high_hz: float) -> "FrequencyPlan":
        """
        Build a plan from two rates, rejecting non-integer ratios.

        Raises:
            ArgumentError: If ``high_hz / base_hz`` is not a positive integer
        """
        if base_hz <= 0 or high_hz <= 0:
            raise ArgumentError("frequencies must be positive", field="frequency_plan")
        ratio = high_hz / base_hz
        rounded = int(round(ratio))
        if rounded < 1 or abs(ratio - rounded) > 1e-9 * ratio:
            raise ArgumentError(
                f"high/base frequency ratio must be a positive integer, got {ratio:g}",
                field="frequency_plan",
                base_hz=base_hz,
                high_hz=high_hz,
            )
        return cls(base_hz=base_hz, high_hz=high_hz, ratio=rounded)


def slice_frequencies(window: Window, plan: FrequencyPlan) -> List[Window]:
    """
    Divide ``window`` into ``plan.ratio`` consecutive half-open sub-windows.

    When the duration is not divisible by the ratio, the remainder
    microseconds go one each to the trailing sub-windows, so the last
    sub-window (the one aligned to the label) is never the shortest.

    Args:
        window: Labeled interval
        plan: Frequency plan

    Returns:
        Sub-windows in temporal order, covering ``window`` exactly

    Raises:
        ArgumentError: If the window is shorter than ``plan.ratio`` µs
    """
    ratio = plan.ratio
    if ratio < 1:
        raise ArgumentError("ratio must be >= 1", field="ratio")
    duration = window.t2 - window.t1
    if duration < ratio:
        raise ArgumentError(
            f"window of {duration} µs cannot be divided into {ratio} sub-windows",
            field="window",
        )
    base, remainder = divmod(duration, ratio)
    windows = []
    start = window.t1
    for k in range(ratio):
        length = base + (1 if k >= ratio - remainder else 0)
        windows.append(Window(t1=start, t2=start + length))
        start += length
    return windows


def sample_subwindow(windows: Sequence[Window], rng: np.random.Generator) -> Window:
    """
    Pick one sub-window uniformly at random.

    Raises:
        ArgumentError: If ``windows`` is empty
    """
    if len(windows) == 0:
        raise ArgumentError("cannot sample from an empty window list", field="windows")
    return windows[int(rng.integers(len(windows)))]


def last_subwindow(windows: Sequence[Window]) -> Window:
    """
    The final sub-window, i.e. the one ending on the labeled timestamp.

    Raises:
        ArgumentError: If ``windows`` is empty
    """
    if len(windows) == 0:
        raise ArgumentError("no sub-windows given", field="windows")
    return windows[-1]
