"""
Labeled intervals of a synthetic scene.

Every pair of consecutive frames ``(t_k, t_k+1)`` yields one labeled interval
``[t_k, t_k+1)`` whose annotation is the ground truth at ``t_k+1`` (the
labeled timestamp the last sub-window ends on).
"""

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from ..core.models import GroundTruthBox
from ..events.stream import EventStream
from ..events.voxel import EventTensor, VoxelSpec, voxelize
from ..events.windows import FrequencyPlan, Window, slice_frequencies
from ..synth.scene import FrameBank, SceneSequence, gt_at


@dataclass(frozen=True, eq=False)
class LabeledInterval:
    """One labeled interval with its high-frequency sub-windows."""

    sequence_id: str
    index: int
    window: Window
    sub_windows: Tuple[Window, ...]
    gts: Tuple[GroundTruthBox, ...]
    stream: EventStream
    frames: FrameBank

    @property
    def ratio(self) -> int:
        return len(self.sub_windows)

    def tensor(self, window: Window, bins: int) -> EventTensor:
        spec = VoxelSpec(T=bins, H=self.stream.sensor_h, W=self.stream.sensor_w)
        return voxelize(self.stream, window, spec)

    def frame_for(self, window: Window) -> np.ndarray:
        """Latest frame at or before the start of ``window``."""
        return self.frames.latest_at(window.t1)


def build_dataset(scene: SceneSequence, plan: FrequencyPlan, sequence_id: str = "scene") -> List[LabeledInterval]:
    """Split ``scene`` into labeled intervals at the frame rate."""
    times = scene.frames.times
    intervals = []
    for k in range(len(times) - 1):
        window = Window(t1=int(times[k]), t2=int(times[k + 1]))
        intervals.append(
            LabeledInterval(
                sequence_id=sequence_id,
                index=k,
                window=window,
                sub_windows=tuple(slice_frequencies(window, plan)),
                gts=tuple(gt_at(scene, window.t2)),
                stream=scene.events,
                frames=scene.frames,
            )
        )
    return intervals
