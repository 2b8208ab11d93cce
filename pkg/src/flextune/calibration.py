"""
High-frequency pseudo-label bootstrapping and temporal consistency calibration.

Pipeline for one labeled interval split into ``ratio`` sub-windows::

    bootstrap (forward) ─┐
                         ├─ bidirectional_merge ─ nms ─ confidence_filter
    bootstrap (backward)─┘      ─ link_tracklets ─ prune_and_emit

Every stage only removes detections (apart from the union of the two
directions), and every ordering has a deterministic tie-break so the whole
pipeline is bit-reproducible.
"""

from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..core.exceptions import ArgumentError
from ..core.logging import get_logger
from ..core.models import Detection, GroundTruthBox, ObjectClass
from ..detector.boxes import iou
from ..detector.model import DetectMode, Detector
from ..events.stream import EventStream, reverse_stream
from ..events.voxel import VoxelSpec, voxelize
from ..events.windows import Window
from ..synth.scene import FrameBank

logger = get_logger(__name__)


class TuneConfig(BaseModel):
    """Calibration thresholds and self-training settings."""
    model_config = ConfigDict(frozen=True)

    tau_car: float = Field(0.6, gt=0, le=1, description="Confidence threshold for class 0")
    tau_ped: float = Field(0.6, gt=0, le=1, description="Confidence threshold for other classes")
    tau_iou: float = Field(0.6, gt=0, le=1, description="IoU needed to extend a tracklet")
    min_track_len: int = Field(6, ge=1, description="Shortest tracklet that yields labels")
    pseudo_weight: float = Field(1.0, ge=0, description="Weight of the pseudo-label loss")
    nms_iou: float = Field(0.5, gt=0, le=1, description="NMS suppression threshold")
    rounds: int = Field(1, ge=1, description="Self-training rounds")
    round_epochs: int = Field(1, ge=1, description="Training epochs per self-training round")
    max_gap: int = Field(0, ge=0, description="Windows a tracklet may skip and stay active")
    bidirectional: bool = Field(True, description="Merge a time-reversed pass")
    reverse_flips_polarity: bool = Field(True, description="Negate polarity when reversing time")


class Tracklet(BaseModel):
    """Detections of one object linked across sub-windows."""

    track_id: int = Field(..., ge=0)
    entries: List[Tuple[int, Detection]] = Field(default_factory=list, description="(window index, Detection) pairs")

    @model_validator(mode="after")
    def check_order(self):
        indices = [index for index, _ in self.entries]
        if any(b <= a for a, b in zip(indices, indices[1:])):
            raise ValueError("tracklet window indices must be strictly increasing")
        return self

    @property
    def length(self) -> int:
        return len(self.entries)

    @property
    def last_index(self) -> int:
        return self.entries[-1][0]

    @property
    def last(self) -> Detection:
        return self.entries[-1][1]


class PseudoLabelSet(BaseModel):
    """Refined labels per sub-window index; scores are kept apart for statistics."""

    sequence_id: str = "scene"
    windows: List[Window] = Field(default_factory=list)
    labels: Dict[int, List[GroundTruthBox]] = Field(default_factory=dict)
    scores: Dict[int, List[float]] = Field(
        default_factory=dict, description="Scores of the detections behind each label"
    )

    @property
    def count(self) -> int:
        return sum(len(boxes) for boxes in self.labels.values())

    @property
    def mean_score(self) -> Optional[float]:
        values = [s for scores in self.scores.values() for s in scores]
        return float(np.mean(values)) if values else None

    def restricted(self, indices: Sequence[int]) -> "PseudoLabelSet":
        """Copy keeping only the given window indices."""
        keep = set(indices)
        return self.model_copy(
            update={
                "labels": {i: boxes for i, boxes in self.labels.items() if i in keep},
                "scores": {i: values for i, values in self.scores.items() if i in keep},
            }
        )


def bootstrap(
    detector: Detector,
    frames: FrameBank,
    windows: Sequence[Window],
    stream: EventStream,
    bins: int,
    pairing_times: Optional[Sequence[int]] = None,
    mode: DetectMode = DetectMode.FUSED,
) -> List[List[Detection]]:
    """
    Run the detector on every sub-window.

    Args:
        detector: Trained detector
        frames: Frames of the sequence
        windows: Sub-windows from ``slice_frequencies``
        stream: Events to voxelize
        bins: Temporal bins per tensor
        pairing_times: Instant used to pick each window's frame (latest
            frame at or before it); defaults to each window's start
        mode: Detection mode

    Returns:
        One detection list per window, in window order
    """
    if pairing_times is not None and len(pairing_times) != len(windows):
        raise ArgumentError("one pairing time per window is required", field="pairing_times")
    spec = VoxelSpec(T=bins, H=stream.sensor_h, W=stream.sensor_w)
    results = []
    for index, window in enumerate(windows):
        tensor = voxelize(stream, window, spec)
        anchor = window.t1 if pairing_times is None else pairing_times[index]
        frame = None if DetectMode(mode) == DetectMode.EVENT_ONLY else frames.latest_at(anchor)
        results.append(list(detector.detect(tensor, frame, mode)))
    return results


def bootstrap_backward(
    detector: Detector,
    frames: FrameBank,
    windows: Sequence[Window],
    stream: EventStream,
    bins: int,
    flip_polarity: bool = True,
    mode: DetectMode = DetectMode.FUSED,
) -> List[List[Detection]]:
    """
    Bootstrap on the time-reversed interval.

    The interval spanned by ``windows`` is reversed with ``reverse_stream``.
    Backward window ``j`` is the mirror image of forward window
    ``ratio - 1 - j`` and is paired with that forward window's frame. The
    result is in backward order; ``bidirectional_merge`` realigns it.
    """
    if not windows:
        return []
    outer = Window(t1=windows[0].t1, t2=windows[-1].t2)
    reversed_stream = reverse_stream(stream, outer, flip_polarity=flip_polarity)
    mirrored = [w.reflect(outer) for w in reversed(windows)]
    pairing = [w.t1 for w in reversed(windows)]
    return bootstrap(detector, frames, mirrored, reversed_stream, bins, pairing, mode)


def bidirectional_merge(
    forward: Sequence[Sequence[Detection]],
    backward: Sequence[Sequence[Detection]],
    windows: Sequence[Window],
) -> List[List[Detection]]:
    """
    Union the forward lists with the index-reversed backward lists.

    Backward list ``j`` lands on forward window ``ratio - 1 - j`` and its
    detections are re-stamped with that window's end. An empty backward set
    leaves the forward lists unchanged.

    Raises:
        ArgumentError: If the list counts disagree with ``windows``
    """
    if len(forward) != len(windows):
        raise ArgumentError(
            f"{len(forward)} forward lists for {len(windows)} windows", field="forward"
        )
    if len(backward) == 0:
        return [list(dets) for dets in forward]
    if len(backward) != len(windows):
        raise ArgumentError(
            f"{len(backward)} backward lists for {len(windows)} windows", field="backward"
        )
    ratio = len(windows)
    merged = []
    for index, window in enumerate(windows):
        realigned = [d.model_copy(update={"t": window.t2}) for d in backward[ratio - 1 - index]]
        merged.append(list(forward[index]) + realigned)
    return merged


def nms(dets: Sequence[Detection], nms_iou: float) -> List[Detection]:
    """
    Classwise greedy non-maximum suppression.

    Detections are visited by ``Detection.rank_key`` (score descending, then
    box corners and class ascending); a detection is suppressed when its IoU
    with an already kept detection of the same class is ``>= nms_iou``.
    """
    kept: List[Detection] = []
    for det in sorted(dets, key=lambda d: d.rank_key()):
        if all(k.class_id != det.class_id or iou(k.box, det.box) < nms_iou for k in kept):
            kept.append(det)
    return kept


def class_threshold(class_id: int, config: TuneConfig) -> float:
    return config.tau_car if class_id == ObjectClass.CAR else config.tau_ped


def confidence_filter(dets: Sequence[Detection], config: TuneConfig) -> List[Detection]:
    """Keep detections whose score reaches their class threshold (inclusive)."""
    return [d for d in dets if d.score >= class_threshold(d.class_id, config)]


def link_tracklets(
    per_window: Sequence[Sequence[Detection]],
    tau_iou: float,
    max_gap: int = 0,
) -> List[Tracklet]:
    """
    Greedy IoU tracking across consecutive windows.

    In each window, candidate (tracklet, detection) pairs of the same class
    with IoU ``>= tau_iou`` are taken highest IoU first (ties broken by the
    two boxes' tie-break tuples). Each tracklet and detection is matched at
    most once; unmatched detections open new tracklets. A tracklet that is
    not extended for more than ``max_gap`` windows stops accepting matches.
    """
    tracklets: List[Tracklet] = []
    for index, dets in enumerate(per_window):
        eligible = [t for t in tracklets if index - t.last_index - 1 <= max_gap]
        candidates = []
        for t_pos, tracklet in enumerate(eligible):
            previous = tracklet.last
            for d_pos, det in enumerate(dets):
                if det.class_id != previous.class_id:
                    continue
                overlap = iou(previous.box, det.box)
                if overlap >= tau_iou:
                    candidates.append((-overlap, previous.tie_break(), det.tie_break(), t_pos, d_pos))
        candidates.sort()
        used_tracks, used_dets = set(), set()
        for _, _, _, t_pos, d_pos in candidates:
            if t_pos in used_tracks or d_pos in used_dets:
                continue
            used_tracks.add(t_pos)
            used_dets.add(d_pos)
            eligible[t_pos].entries.append((index, dets[d_pos]))
        for d_pos, det in enumerate(dets):
            if d_pos not in used_dets:
                tracklets.append(Tracklet(track_id=len(tracklets), entries=[(index, det)]))
    return tracklets


def prune_and_emit(
    tracklets: Sequence[Tracklet],
    config: TuneConfig,
    windows: Optional[Sequence[Window]] = None,
    sequence_id: str = "scene",
) -> PseudoLabelSet:
    """
    Drop tracklets shorter than ``min_track_len`` and turn the rest into labels.

    Labels keep the detection box and class; the tracklet id becomes the
    label's track id.
    """
    labels: Dict[int, List[GroundTruthBox]] = {}
    scores: Dict[int, List[float]] = {}
    for tracklet in tracklets:
        if tracklet.length < config.min_track_len:
            continue
        for index, det in tracklet.entries:
            labels.setdefault(index, []).append(
                GroundTruthBox(box=det.box, class_id=det.class_id, track_id=tracklet.track_id)
            )
            scores.setdefault(index, []).append(det.score)
    return PseudoLabelSet(
        sequence_id=sequence_id,
        windows=list(windows or []),
        labels={index: labels[index] for index in sorted(labels)},
        scores={index: scores[index] for index in sorted(scores)},
    )
