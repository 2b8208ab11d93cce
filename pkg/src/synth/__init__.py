"""
Synthetic event-camera scenes with exact ground truth.
"""

from .labels import interpolate_labels
from .presets import PRESETS, despawn_scene_config, standard_scene_config
from .scene import (
    FrameBank,
    GroundTruthOracle,
    ObjectSpec,
    SceneConfig,
    SceneSequence,
    TrajectoryKnot,
    clip_box,
    generate_scene,
    gt_at,
    render_intensity,
)

__all__ = [
    "PRESETS",
    "FrameBank",
    "GroundTruthOracle",
    "ObjectSpec",
    "SceneConfig",
    "SceneSequence",
    "TrajectoryKnot",
    "clip_box",
    "despawn_scene_config",
    "generate_scene",
    "gt_at",
    "interpolate_labels",
    "render_intensity",
    "standard_scene_config",
]
