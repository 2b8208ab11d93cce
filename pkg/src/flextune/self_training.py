"""
Cyclic self-training.

Each round regenerates pseudo-labels for the unlabeled sub-windows with the
current model and then trains on ground truth plus the weighted pseudo-labels
for ``round_epochs`` epochs (one by default). Sub-windows ``0 .. ratio-2``
receive pseudo-labels; the last sub-window stays under ground-truth
supervision.
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

from pydantic import BaseModel

from ..core.logging import get_logger
from ..detector.model import DetectMode, Detector, ToyModel
from .calibration import (
    PseudoLabelSet,
    TuneConfig,
    bidirectional_merge,
    bootstrap,
    bootstrap_backward,
    confidence_filter,
    link_tracklets,
    nms,
    prune_and_emit,
)
from .dataset import LabeledInterval
from .training import TrainingParams, run_epoch

logger = get_logger(__name__)


class RoundStats(BaseModel):
    """Statistics of one self-training round."""

    round: int
    pseudo_label_count: int
    mean_score: Optional[float]
    tune_loss: float
    mean_loss: float


@dataclass(frozen=True, eq=False)
class SelfTrainResult:
    model: ToyModel
    rounds: List[RoundStats]
    pseudo_labels: Dict[int, PseudoLabelSet]


def refine_pseudo_labels(
    detector: Detector,
    interval: LabeledInterval,
    config: TuneConfig,
    bins: int,
    mode: DetectMode = DetectMode.FUSED,
) -> PseudoLabelSet:
    """Full calibration pipeline for one labeled interval."""
    windows = list(interval.sub_windows)
    forward = bootstrap(detector, interval.frames, windows, interval.stream, bins, mode=mode)
    backward = []
    if config.bidirectional:
        backward = bootstrap_backward(
            detector,
            interval.frames,
            windows,
            interval.stream,
            bins,
            flip_polarity=config.reverse_flips_polarity,
            mode=mode,
        )
    merged = bidirectional_merge(forward, backward, windows)
    calibrated = [confidence_filter(nms(dets, config.nms_iou), config) for dets in merged]
    tracklets = link_tracklets(calibrated, config.tau_iou, max_gap=config.max_gap)
    labels = prune_and_emit(tracklets, config, windows, interval.sequence_id)
    return labels.restricted(range(interval.ratio - 1))


def generate_pseudo_labels(
    detector: Detector,
    dataset: Sequence[LabeledInterval],
    config: TuneConfig,
    bins: int,
    mode: DetectMode = DetectMode.FUSED,
) -> Dict[int, PseudoLabelSet]:
    """Pseudo-labels for every interval, keyed by dataset position."""
    return {
        position: refine_pseudo_labels(detector, interval, config, bins, mode)
        for position, interval in enumerate(dataset)
    }


def self_train(
    model: ToyModel,
    dataset: Sequence[LabeledInterval],
    config: TuneConfig,
    params: TrainingParams,
) -> SelfTrainResult:
    """
    Run ``config.rounds`` rounds of pseudo-label generation and training.

    Args:
        model: Model pre-trained with low-frequency sparse training
        dataset: Labeled intervals
        config: Calibration and self-training settings
        params: Optimiser settings; ``params.seed`` drives all randomness and
            ``params.mode`` is used both for bootstrapping and training

    Returns:
        The final model, per-round statistics and the last round's labels
    """
    rounds = []
    pseudo: Dict[int, PseudoLabelSet] = {}
    for round_index in range(config.rounds):
        pseudo = generate_pseudo_labels(model, dataset, config, model.spec.bins, params.mode)
        count = sum(labels.count for labels in pseudo.values())
        scores = [s for labels in pseudo.values() for values in labels.scores.values() for s in values]
        mean_score = sum(scores) / len(scores) if scores else None
        if count == 0:
            logger.warning(f"Round {round_index + 1}: no pseudo-labels survived calibration, training on ground truth only")

        records = []
        for epoch in range(config.round_epochs):
            result = run_epoch(
                model,
                dataset,
                params,
                epoch_index=params.epochs + round_index * config.round_epochs + epoch,
                pseudo=pseudo,
                pseudo_weight=config.pseudo_weight,
            )
            model = result.model
            records.append(result.record)
        stats = RoundStats(
            round=round_index + 1,
            pseudo_label_count=count,
            mean_score=mean_score,
            tune_loss=records[-1].tune_loss,
            mean_loss=records[-1].mean_loss,
        )
        rounds.append(stats)
        logger.info(
            f"Round {stats.round}/{config.rounds}: {count} pseudo-labels"
            + (f", mean score {mean_score:.3f}" if mean_score is not None else "")
            + f", tune loss {stats.tune_loss:.4f}"
        )
    return SelfTrainResult(model=model, rounds=rounds, pseudo_labels=pseudo)
