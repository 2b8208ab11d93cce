"""
Event stream representation, windowing, frequency slicing and voxelization.
"""

from .windows import FrequencyPlan, Window, last_subwindow, sample_subwindow, slice_frequencies
from .stream import EVENT_DTYPE, Event, EventStream, reverse_stream
from .voxel import EventTensor, VoxelSpec, voxelize
from .evt_format import decode_evt1, encode_evt1, read_evt1, write_evt1

__all__ = [
    "EVENT_DTYPE",
    "Event",
    "EventStream",
    "EventTensor",
    "FrequencyPlan",
    "VoxelSpec",
    "Window",
    "decode_evt1",
    "encode_evt1",
    "last_subwindow",
    "read_evt1",
    "reverse_stream",
    "sample_subwindow",
    "slice_frequencies",
    "voxelize",
    "write_evt1",
]
