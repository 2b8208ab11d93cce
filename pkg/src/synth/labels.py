"""
Label interpolation between two annotated instants.
"""

from typing import List, Sequence

import numpy as np

from ..core.exceptions import ArgumentError
from ..core.models import GroundTruthBox


def interpolate_labels(
    boxes_a: Sequence[GroundTruthBox],
    boxes_b: Sequence[GroundTruthBox],
    fraction: float,
) -> List[GroundTruthBox]:
    """
    Linearly interpolate boxes that share a track id.

    Tracks present in only one of the two sets are dropped. The output keeps
    the order of ``boxes_a``.

    Args:
        boxes_a: Annotations at the earlier instant
        boxes_b: Annotations at the later instant
        fraction: Position between the two instants, in ``[0, 1]``

    Raises:
        ArgumentError: If ``fraction`` lies outside ``[0, 1]``
    """
    if not 0.0 <= fraction <= 1.0:
        raise ArgumentError(f"fraction {fraction} outside [0, 1]", field="fraction")
    later = {box.track_id: box for box in boxes_b}
    result = []
    for box in boxes_a:
        match = later.get(box.track_id)
        if match is None:
            continue
        corners = (1.0 - fraction) * np.asarray(box.box) + fraction * np.asarray(match.box)
        result.append(
            GroundTruthBox(
                box=tuple(float(v) for v in corners),
                class_id=box.class_id,
                track_id=box.track_id,
            )
        )
    return result
