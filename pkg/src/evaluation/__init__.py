"""
COCO metrics and the multi-frequency evaluation harness.
"""

from .coco import EvalBundle, average_precision, coco_map
from .sweep import (
    FrequencySweep,
    GTMode,
    SweepPoint,
    default_offsets,
    frequency_sweep,
    offsets_for_frequencies,
    window_at,
)

__all__ = [
    "EvalBundle",
    "FrequencySweep",
    "GTMode",
    "SweepPoint",
    "average_precision",
    "coco_map",
    "default_offsets",
    "frequency_sweep",
    "offsets_for_frequencies",
    "window_at",
]
