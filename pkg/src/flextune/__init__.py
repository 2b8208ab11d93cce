"""
Frequency-adaptive fine-tuning: pseudo-label bootstrapping, temporal
consistency calibration and cyclic self-training.
"""

from .calibration import (
    PseudoLabelSet,
    Tracklet,
    TuneConfig,
    bidirectional_merge,
    bootstrap,
    bootstrap_backward,
    confidence_filter,
    link_tracklets,
    nms,
    prune_and_emit,
)
from .dataset import LabeledInterval, build_dataset
from .self_training import RoundStats, SelfTrainResult, generate_pseudo_labels, refine_pseudo_labels, self_train
from .training import EpochRecord, SubwindowSampling, TrainingParams, fit_sparse, run_epoch, tune_loss

__all__ = [
    "EpochRecord",
    "LabeledInterval",
    "PseudoLabelSet",
    "RoundStats",
    "SelfTrainResult",
    "SubwindowSampling",
    "Tracklet",
    "TrainingParams",
    "TuneConfig",
    "bidirectional_merge",
    "bootstrap",
    "bootstrap_backward",
    "build_dataset",
    "confidence_filter",
    "fit_sparse",
    "generate_pseudo_labels",
    "link_tracklets",
    "nms",
    "prune_and_emit",
    "refine_pseudo_labels",
    "run_epoch",
    "self_train",
    "tune_loss",
]
