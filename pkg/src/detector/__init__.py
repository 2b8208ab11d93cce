"""
Toy two-scale detector: forward/backward pass, loss, training step and
checkpoints.
"""

from .boxes import iou, iou_matrix
from .checkpoint import load_model, save_model
from .loss import LossBreakdown, assign_targets, detection_loss, detection_loss_and_grad
from .model import (
    DetectMode,
    Detector,
    HeadOutput,
    ModelSpec,
    ToyModel,
    decode_head,
    detect,
)
from .train import ItemKind, StepOutcome, TrainItem, gradient_step, train_step

__all__ = [
    "DetectMode",
    "Detector",
    "HeadOutput",
    "ItemKind",
    "LossBreakdown",
    "ModelSpec",
    "StepOutcome",
    "ToyModel",
    "TrainItem",
    "assign_targets",
    "decode_head",
    "detect",
    "detection_loss",
    "detection_loss_and_grad",
    "gradient_step",
    "iou",
    "iou_matrix",
    "load_model",
    "save_model",
    "train_step",
]
