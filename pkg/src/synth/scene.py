"""
Synthetic event scenes.

Moving rectangles are rendered with exact area coverage over a uniform
background. The log intensity of every pixel is sampled on a fixed micro-step
grid and fed to an integrate-and-fire emitter: each time the change since the
pixel's reference level crosses ``k * C`` the pixel emits ``k`` events with the
sign of the change and its reference moves by ``k * C`` (the residual is
carried). Poisson background noise is added on top. Frames sample the
intensity field at exact frame timestamps, and ground truth is available at
any instant.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..core.exceptions import ArgumentError
from ..core.logging import get_logger
from ..core.models import Box, GroundTruthBox
from ..core.seeding import rng_stream
from ..events.stream import EVENT_DTYPE, EventStream

logger = get_logger(__name__)

MIN_INTENSITY = 1e-3


class TrajectoryKnot(BaseModel):
    """Top-left corner position at time ``t``."""
    model_config = ConfigDict(frozen=True)

    t: int = Field(..., description="Knot time (µs)")
    x: float = Field(..., description="Left edge (pixels)")
    y: float = Field(..., description="Top edge (pixels)")


class ObjectSpec(BaseModel):
    """A rectangle moving along a piecewise-linear trajectory."""
    model_config = ConfigDict(frozen=True)

    class_id: int = Field(..., ge=0, description="0 = car-like, 1 = pedestrian-like")
    size: Tuple[float, float] = Field(..., description="(w, h) in pixels")
    trajectory: List[TrajectoryKnot] = Field(..., min_length=1)
    intensity: float = Field(..., description="Contrast added to the background")
    spawn_t: int = Field(0, description="First alive instant (µs)")
    despawn_t: int = Field(..., description="First instant no longer alive (µs)")

    @model_validator(mode="after")
    def check_object(self):
        if self.size[0] <= 0 or self.size[1] <= 0:
            raise ValueError("object size must be positive")
        if not self.spawn_t < self.despawn_t:
            raise ValueError("spawn_t must be smaller than despawn_t")
        times = [knot.t for knot in self.trajectory]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("trajectory knot times must be strictly increasing")
        return self

    def alive(self, t: float) -> bool:
        return self.spawn_t <= t < self.despawn_t

    def position(self, t: float) -> Tuple[float, float]:
        """Top-left corner at ``t`` (held constant outside the knot range)."""
        times = [knot.t for knot in self.trajectory]
        x = float(np.interp(t, times, [knot.x for knot in self.trajectory]))
        y = float(np.interp(t, times, [knot.y for knot in self.trajectory]))
        return x, y

    def box_at(self, t: float) -> Box:
        x, y = self.position(t)
        return (x, y, x + self.size[0], y + self.size[1])


class SceneConfig(BaseModel):
    """Everything needed to regenerate a scene bit-for-bit."""

    sensor_w: int = Field(..., ge=1, le=65535)
    sensor_h: int = Field(..., ge=1, le=65535)
    duration: int = Field(..., gt=0, description="Scene length (µs)")
    frame_hz: float = Field(..., gt=0, description="Frame (labeled) frequency")
    contrast_threshold: float = Field(..., gt=0, description="C in log-intensity units")
    objects: List[ObjectSpec] = Field(default_factory=list)
    background_intensity: float = Field(0.4, gt=0)
    noise_rate: float = Field(0.0, ge=0, description="Noise events per pixel per second")
    seed: int = Field(..., ge=0)
    micro_step_us: int = Field(100, ge=1, description="Intensity simulation step (µs)")

    @model_validator(mode="after")
    def check_frame_period(self):
        period = 1e6 / self.frame_hz
        if abs(period - round(period)) > 1e-6:
            raise ValueError(f"frame period 1e6/{self.frame_hz} µs must be an integer")
        return self

    @property
    def frame_period_us(self) -> int:
        return int(round(1e6 / self.frame_hz))


@dataclass(frozen=True, eq=False)
class FrameBank:
    """Frames sorted by timestamp."""

    times: np.ndarray
    images: Tuple[np.ndarray, ...]

    def __len__(self) -> int:
        return len(self.images)

    def __iter__(self):
        return iter(zip(self.times.tolist(), self.images))

    def index_at_or_before(self, t: int) -> int:
        index = int(np.searchsorted(self.times, t, side="right")) - 1
        if index < 0:
            raise ArgumentError(f"no frame at or before t={t}", field="t")
        return index

    def latest_at(self, t: int) -> np.ndarray:
        """Most recent frame captured at or before ``t``."""
        return self.images[self.index_at_or_before(t)]


@dataclass(frozen=True, eq=False)
class GroundTruthOracle:
    """Exact boxes of every object at any instant."""

    config: SceneConfig

    def boxes_at(self, t: float) -> List[GroundTruthBox]:
        boxes = []
        for track_id, obj in enumerate(self.config.objects):
            if not obj.alive(t):
                continue
            clipped = clip_box(obj.box_at(t), self.config.sensor_w, self.config.sensor_h)
            if clipped is None:
                continue
            boxes.append(GroundTruthBox(box=clipped, class_id=obj.class_id, track_id=track_id))
        return boxes


@dataclass(frozen=True, eq=False)
class SceneSequence:
    """Generated scene: events, frames and the ground-truth oracle."""

    config: SceneConfig
    events: EventStream
    frames: FrameBank
    gt: GroundTruthOracle = field(repr=False)

    def frame_labels(self) -> List[Tuple[int, List[GroundTruthBox]]]:
        """Annotation set of every frame timestamp."""
        return [(int(t), self.gt.boxes_at(int(t))) for t in self.frames.times]


def clip_box(box: Box, width: int, height: int) -> Optional[Box]:
    """Clip to the sensor; ``None`` when nothing with positive area remains."""
    x_min = min(max(box[0], 0.0), width)
    y_min = min(max(box[1], 0.0), height)
    x_max = min(max(box[2], 0.0), width)
    y_max = min(max(box[3], 0.0), height)
    if x_max - x_min <= 0 or y_max - y_min <= 0:
        return None
    return (x_min, y_min, x_max, y_max)


def _coverage(lo: float, hi: float, size: int) -> np.ndarray:
    """Fraction of each unit pixel interval ``[k, k+1)`` covered by ``[lo, hi)``."""
    edges = np.arange(size, dtype=np.float64)
    return np.clip(np.minimum(hi, edges + 1.0) - np.maximum(lo, edges), 0.0, 1.0)


def render_intensity(config: SceneConfig, t: float) -> np.ndarray:
    """Linear intensity image at time ``t`` (later objects occlude earlier ones)."""
    background = config.background_intensity
    image = np.full((config.sensor_h, config.sensor_w), background, dtype=np.float64)
    for obj in config.objects:
        if not obj.alive(t):
            continue
        x_min, y_min, x_max, y_max = obj.box_at(t)
        cover = np.outer(
            _coverage(y_min, y_max, config.sensor_h),
            _coverage(x_min, x_max, config.sensor_w),
        )
        image = image * (1.0 - cover) + (background + obj.intensity) * cover
    return np.maximum(image, MIN_INTENSITY)


def _emit_signal_events(config: SceneConfig) -> np.ndarray:
    width, height = config.sensor_w, config.sensor_h
    threshold = config.contrast_threshold
    reference = np.log(render_intensity(config, 0.0))
    pixel_x = np.tile(np.arange(width, dtype=np.uint16), height)
    pixel_y = np.repeat(np.arange(height, dtype=np.uint16), width)

    chunks = []
    for t in range(config.micro_step_us, config.duration, config.micro_step_us):
        log_intensity = np.log(render_intensity(config, float(t)))
        change = (log_intensity - reference).ravel()
        crossings = np.floor(np.abs(change) / threshold).astype(np.int64)
        firing = np.flatnonzero(crossings)
        if firing.size == 0:
            continue
        counts = crossings[firing]
        signs = np.sign(change[firing]).astype(np.int8)
        reference.ravel()[firing] += signs * counts * threshold
        chunk = np.empty(int(counts.sum()), dtype=EVENT_DTYPE)
        chunk["x"] = np.repeat(pixel_x[firing], counts)
        chunk["y"] = np.repeat(pixel_y[firing], counts)
        chunk["t"] = t
        chunk["p"] = np.repeat(signs, counts)
        chunks.append(chunk)
    if not chunks:
        return np.zeros(0, dtype=EVENT_DTYPE)
    return np.concatenate(chunks)


def _noise_events(config: SceneConfig) -> np.ndarray:
    if config.noise_rate == 0:
        return np.zeros(0, dtype=EVENT_DTYPE)
    rng = rng_stream(config.seed, "noise")
    expected = config.noise_rate * config.sensor_w * config.sensor_h * config.duration / 1e6
    count = int(rng.poisson(expected))
    noise = np.empty(count, dtype=EVENT_DTYPE)
    noise["x"] = rng.integers(0, config.sensor_w, count)
    noise["y"] = rng.integers(0, config.sensor_h, count)
    noise["t"] = rng.integers(0, config.duration, count)
    noise["p"] = rng.choice(np.array([-1, 1], dtype=np.int8), count)
    return noise


def generate_scene(config: SceneConfig) -> SceneSequence:
    """
    Simulate events, frames and ground truth for ``config``.

    Args:
        config: Scene description; the seed drives the noise stream

    Returns:
        SceneSequence whose events are sorted and lie in ``[0, duration)``
    """
    signal = _emit_signal_events(config)
    noise = _noise_events(config)
    merged = np.concatenate([signal, noise])
    merged = merged[np.argsort(merged["t"], kind="stable")]
    events = EventStream(merged, config.sensor_w, config.sensor_h)

    period = config.frame_period_us
    times = np.arange(0, config.duration + 1, period, dtype=np.int64)
    images = tuple(render_intensity(config, float(t)).astype(np.float32) for t in times)
    frames = FrameBank(times=times, images=images)

    logger.info(
        f"Generated scene: {len(config.objects)} objects, {len(signal)} signal + "
        f"{len(noise)} noise events, {len(times)} frames"
    )
    return SceneSequence(config=config, events=events, frames=frames, gt=GroundTruthOracle(config))


def gt_at(scene: SceneSequence, t: float) -> List[GroundTruthBox]:
    """
    Boxes of all objects alive at ``t``, clipped to the sensor.

    Raises:
        ArgumentError: If ``t`` lies outside ``[0, duration]``
    """
    if not 0 <= t <= scene.config.duration:
        raise ArgumentError(
            f"t={t} outside [0, {scene.config.duration}]", field="t"
        )
    return scene.gt.boxes_at(t)
