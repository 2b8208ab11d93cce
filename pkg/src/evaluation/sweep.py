"""
Multi-frequency evaluation of a detector on a synthetic scene.

For each labeled interval ``[t_k, t_k + ΔT)`` and offset ``o`` the detector
sees the window ``[t_e - L, t_e)`` with::

    t_e = t_k + round(o * ΔT)
    L   = round((1 - o) * ΔT)      (a full ΔT when o = 1)

so the window always ends ``o * ΔT`` after the labeled frame and shrinks as
the offset grows. The effective frequency of a point is ``1 / L``. Ground
truth at ``t_e`` comes either from the scene oracle (``exact``) or from
linear interpolation between the two surrounding annotations
(``interpolated``), which loses objects that appear or vanish in between.
"""

import csv
import io
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence

from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..core.exceptions import ArgumentError
from ..core.logging import get_logger
from ..core.models import Detection, GroundTruthBox
from ..detector.model import DetectMode, Detector
from ..events.voxel import VoxelSpec, voxelize
from ..events.windows import Window
from ..synth.labels import interpolate_labels
from ..synth.scene import SceneSequence, gt_at
from .coco import EvalBundle, coco_map

logger = get_logger(__name__)

FREQUENCY_CONVENTION = "effective_hz = 1e6 / window_us; window_us = round((1 - offset) * delta_T_us), full delta_T at offset 1"
METRIC_COLUMNS = ("map", "ap50", "ap75", "ap_s", "ap_m", "ap_l")


class GTMode(str, Enum):
    EXACT = "exact"
    INTERPOLATED = "interpolated"


class SweepPoint(BaseModel):
    """Metrics at one offset, pooled over every labeled interval."""
    model_config = ConfigDict(frozen=True)

    offset: float = Field(..., ge=0, le=1)
    window_us: int = Field(..., gt=0)
    frequency_hz: float = Field(..., gt=0, description="Effective frequency 1e6 / window_us")
    nominal_hz: Optional[float] = Field(None, gt=0, description="Requested frequency, when the offset came from one")
    images: int = Field(..., ge=0, description="Evaluated windows")
    bundle: EvalBundle

    @property
    def label_hz(self) -> float:
        return self.nominal_hz if self.nominal_hz is not None else self.frequency_hz


class FrequencySweep(BaseModel):
    """Result of ``frequency_sweep``."""
    model_config = ConfigDict(frozen=True)

    offsets: List[float]
    delta_T: int = Field(50_000, gt=0, description="Labeled interval in microseconds")
    gt_mode: GTMode = GTMode.EXACT
    mode: DetectMode = DetectMode.FUSED
    points: List[SweepPoint] = Field(default_factory=list)
    convention: str = FREQUENCY_CONVENTION

    @model_validator(mode="after")
    def check_offsets(self):
        if any(not 0.0 <= o <= 1.0 for o in self.offsets):
            raise ValueError("offsets must lie in [0, 1]")
        if any(b <= a for a, b in zip(self.offsets, self.offsets[1:])):
            raise ValueError("offsets must be strictly increasing")
        return self

    @property
    def results(self) -> List[tuple]:
        return [(point.frequency_hz, point.bundle) for point in self.points]

    def class_ids(self) -> List[int]:
        return sorted({c for point in self.points for c in point.bundle.per_class})

    def to_csv(self) -> str:
        """Metrics table, one row per point; undefined values are empty cells."""
        classes = self.class_ids()
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(
            ["frequency_hz", "offset", *METRIC_COLUMNS, *[f"ap_class_{c}" for c in classes]]
        )
        for point in self.points:
            bundle = point.bundle
            row = [_cell(point.label_hz), _cell(point.offset)]
            row.extend(_cell(getattr(bundle, name)) for name in METRIC_COLUMNS)
            row.extend(_cell(bundle.per_class.get(c)) for c in classes)
            writer.writerow(row)
        return buffer.getvalue()

    def plot_data(self) -> Dict[str, Any]:
        """x/y series of every metric against frequency, plus the labeling convention."""
        return {
            "x_label": "frequency_hz",
            "x": [point.label_hz for point in self.points],
            "effective_hz": [point.frequency_hz for point in self.points],
            "offsets": [point.offset for point in self.points],
            "series": {
                name: [getattr(point.bundle, name) for point in self.points] for name in METRIC_COLUMNS
            },
            "metadata": {
                "delta_T_us": self.delta_T,
                "gt_mode": self.gt_mode.value,
                "mode": self.mode.value,
                "convention": self.convention,
            },
        }


def _cell(value: Optional[float]) -> str:
    return "" if value is None else format(float(value), ".10g")


def default_offsets(n: int = 10) -> List[float]:
    """``i / n`` for ``i = 0..n``."""
    if n < 1:
        raise ArgumentError(f"n must be positive, got {n}", field="n")
    return [i / n for i in range(n + 1)]


def offsets_for_frequencies(frequencies: Sequence[float], delta_T: int = 50_000) -> List[float]:
    """
    Offset whose window length matches each frequency:
    ``o = 1 - 1e6 / (f * delta_T)``.

    Raises:
        ArgumentError: If a frequency is below ``1e6 / delta_T``
    """
    base_hz = 1e6 / delta_T
    offsets = []
    for freq in frequencies:
        if freq < base_hz - 1e-9:
            raise ArgumentError(
                f"frequency {freq} Hz is below the labeled rate {base_hz:g} Hz", field="frequencies"
            )
        offsets.append(max(0.0, 1.0 - base_hz / freq))
    return offsets


def window_at(frame_time: int, offset: float, delta_T: int) -> Window:
    """Detection window for the interval starting at ``frame_time``."""
    if not 0.0 <= offset <= 1.0:
        raise ArgumentError(f"offset {offset} outside [0, 1]", field="offset")
    end = frame_time + int(round(offset * delta_T))
    length = int(round((1.0 - offset) * delta_T)) or delta_T
    return Window(t1=end - length, t2=end)


def sweep_labels(
    scene: SceneSequence, frame_time: int, offset: float, delta_T: int, gt_mode: GTMode
) -> List[GroundTruthBox]:
    """Ground truth at ``frame_time + offset * delta_T`` under ``gt_mode``."""
    end = frame_time + int(round(offset * delta_T))
    if GTMode(gt_mode) == GTMode.EXACT or offset == 0.0:
        return gt_at(scene, end)
    if offset == 1.0:
        return gt_at(scene, frame_time + delta_T)
    return interpolate_labels(gt_at(scene, frame_time), gt_at(scene, frame_time + delta_T), offset)


def frequency_sweep(
    detector: Detector,
    scene: SceneSequence,
    offsets: Sequence[float],
    gt_mode: GTMode = GTMode.EXACT,
    delta_T: Optional[int] = None,
    bins: int = 5,
    mode: DetectMode = DetectMode.FUSED,
    nominal_hz: Optional[Sequence[float]] = None,
) -> FrequencySweep:
    """
    Evaluate ``detector`` at every offset.

    Args:
        detector: Any ``Detector`` implementation
        scene: Scene with frames every ``delta_T``
        offsets: Strictly increasing fractions of ``delta_T``
        gt_mode: ``exact`` or ``interpolated`` ground truth
        delta_T: Labeled interval; defaults to the scene's frame period
        bins: Temporal bins per tensor
        mode: Detection mode
        nominal_hz: Requested frequencies, reported in place of the
            effective ones (same length as ``offsets``)

    Returns:
        FrequencySweep with one point per offset, in offset order

    Raises:
        ArgumentError: On an offset outside ``[0, 1]``, a ``delta_T`` that
            differs from the frame period, or mismatched ``nominal_hz``
    """
    for offset in offsets:
        if not 0.0 <= offset <= 1.0:
            raise ArgumentError(f"offset {offset} outside [0, 1]", field="offsets")
    period = scene.config.frame_period_us
    delta_T = period if delta_T is None else delta_T
    if delta_T != period:
        raise ArgumentError(
            f"delta_T {delta_T} differs from the frame period {period}", field="delta_T"
        )
    if nominal_hz is not None and len(nominal_hz) != len(offsets):
        raise ArgumentError("one nominal frequency per offset is required", field="nominal_hz")
    gt_mode = GTMode(gt_mode)
    mode = DetectMode(mode)

    spec = VoxelSpec(T=bins, H=scene.config.sensor_h, W=scene.config.sensor_w)
    frame_times = [int(t) for t in scene.frames.times[:-1]]
    points = []
    for position, offset in enumerate(offsets):
        dets: Dict[int, List[Detection]] = {}
        gts: Dict[int, List[GroundTruthBox]] = {}
        window = None
        for frame_time in frame_times:
            window = window_at(frame_time, offset, delta_T)
            if window.t1 < 0:
                continue
            tensor = voxelize(scene.events, window, spec)
            frame = None if mode == DetectMode.EVENT_ONLY else scene.frames.latest_at(window.t1)
            dets[window.t2] = list(detector.detect(tensor, frame, mode))
            gts[window.t2] = sweep_labels(scene, frame_time, offset, delta_T, gt_mode)
        window_us = window.duration if window is not None else delta_T
        bundle = coco_map(dets, gts)
        point = SweepPoint(
            offset=offset,
            window_us=window_us,
            frequency_hz=1e6 / window_us,
            nominal_hz=None if nominal_hz is None else nominal_hz[position],
            images=len(dets),
            bundle=bundle,
        )
        logger.info(
            f"Sweep offset {offset:.3f} ({point.label_hz:.1f} Hz, {gt_mode.value}): "
            f"mAP={bundle.map} over {point.images} windows"
        )
        points.append(point)
    return FrequencySweep(offsets=list(offsets), delta_T=delta_T, gt_mode=gt_mode, mode=mode, points=points)
