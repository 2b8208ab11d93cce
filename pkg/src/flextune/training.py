"""
Low-frequency sparse training and the shared epoch loop.

Ground-truth items pair the full labeled window (branch a) with one
high-frequency sub-window (branch b): the last one, which ends on the
labeled timestamp, or a uniformly sampled one. Pseudo-labelled items use the
sub-window they were generated for in both branches, which matches how the
detector sees a single high-frequency window at inference.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..core.logging import get_logger
from ..core.seeding import rng_stream
from ..detector.loss import LossBreakdown
from ..detector.model import DetectMode, ToyModel
from ..detector.train import ItemKind, TrainItem, gradient_step
from ..events.windows import last_subwindow, sample_subwindow
from .calibration import PseudoLabelSet
from .dataset import LabeledInterval

logger = get_logger(__name__)


class SubwindowSampling(str, Enum):
    LAST = "last"
    RANDOM = "random"


class TrainingParams(BaseModel):
    """Optimiser and schedule settings."""
    model_config = ConfigDict(frozen=True)

    lr: float = Field(0.02, ge=0)
    epochs: int = Field(30, ge=0)
    seed: int = Field(..., ge=0)
    batch_size: int = Field(4, ge=1)
    max_grad_norm: Optional[float] = Field(10.0, gt=0)
    subwindow_sampling: SubwindowSampling = SubwindowSampling.LAST
    mode: DetectMode = DetectMode.FUSED


class EpochRecord(BaseModel):
    epoch: int
    steps: int
    mean_loss: float
    tune_loss: float


@dataclass(frozen=True, eq=False)
class EpochResult:
    model: ToyModel
    record: EpochRecord


def tune_loss(
    gt_losses: Sequence[LossBreakdown],
    pseudo_losses: Sequence[LossBreakdown],
    pseudo_weight: float,
) -> float:
    """``sum(gt totals) + pseudo_weight * sum(pseudo totals)``."""
    total = sum(loss.total for loss in gt_losses)
    if pseudo_weight == 0:
        return float(total)
    return float(total + pseudo_weight * sum(loss.total for loss in pseudo_losses))


def gt_item(
    interval: LabeledInterval,
    bins: int,
    sampling: SubwindowSampling,
    rng: np.random.Generator,
) -> TrainItem:
    if SubwindowSampling(sampling) == SubwindowSampling.RANDOM:
        sub = sample_subwindow(interval.sub_windows, rng)
    else:
        sub = last_subwindow(interval.sub_windows)
    return TrainItem(
        frame=interval.frame_for(interval.window),
        events_a=interval.tensor(interval.window, bins),
        events_b=interval.tensor(sub, bins),
        gts=interval.gts,
        kind=ItemKind.GT,
    )


def pseudo_items(
    interval: LabeledInterval,
    labels: PseudoLabelSet,
    bins: int,
    weight: float,
) -> List[TrainItem]:
    items = []
    for index in sorted(labels.labels):
        boxes = labels.labels[index]
        if not boxes:
            continue
        sub = interval.sub_windows[index]
        tensor = interval.tensor(sub, bins)
        items.append(
            TrainItem(
                frame=interval.frame_for(sub),
                events_a=tensor,
                events_b=tensor,
                gts=tuple(boxes),
                weight=weight,
                kind=ItemKind.PSEUDO,
            )
        )
    return items


def run_epoch(
    model: ToyModel,
    dataset: Sequence[LabeledInterval],
    params: TrainingParams,
    epoch_index: int,
    pseudo: Optional[Dict[int, PseudoLabelSet]] = None,
    pseudo_weight: float = 0.0,
) -> EpochResult:
    """
    One pass over ``dataset`` in a seeded random order.

    The order and sub-window draws come from the ``sampling`` stream and the
    gate noise from the ``training`` stream, both keyed by ``epoch_index``.
    Pseudo-labelled items are added only when ``pseudo_weight > 0``.
    """
    order = rng_stream(params.seed, "sampling", epoch_index).permutation(len(dataset))
    sampler = rng_stream(params.seed, "sampling", epoch_index, 1)
    bins = model.spec.bins
    losses = []
    tune_total = 0.0
    steps = 0
    for step, start in enumerate(range(0, len(order), params.batch_size)):
        batch = []
        for position in order[start:start + params.batch_size]:
            interval = dataset[int(position)]
            batch.append(gt_item(interval, bins, params.subwindow_sampling, sampler))
            if pseudo and pseudo_weight > 0 and int(position) in pseudo:
                batch.extend(pseudo_items(interval, pseudo[int(position)], bins, pseudo_weight))
        outcome = gradient_step(
            model,
            batch,
            params.lr,
            rng_stream(params.seed, "training", epoch_index, step),
            params.mode,
            params.max_grad_norm,
        )
        model = outcome.model
        gt_losses = [loss for item, loss in outcome.item_losses if item.kind == ItemKind.GT]
        pseudo_losses = [loss for item, loss in outcome.item_losses if item.kind == ItemKind.PSEUDO]
        tune_total += tune_loss(gt_losses, pseudo_losses, pseudo_weight)
        losses.append(outcome.loss.total)
        steps += 1
    record = EpochRecord(
        epoch=epoch_index,
        steps=steps,
        mean_loss=float(np.mean(losses)) if losses else 0.0,
        tune_loss=tune_total,
    )
    return EpochResult(model=model, record=record)


def fit_sparse(
    model: ToyModel,
    dataset: Sequence[LabeledInterval],
    params: TrainingParams,
) -> Tuple[ToyModel, List[EpochRecord]]:
    """
    Low-frequency sparse training: supervise with ground truth at the labeled
    timestamps only, for ``params.epochs`` epochs.
    """
    history = []
    for epoch in range(params.epochs):
        result = run_epoch(model, dataset, params, epoch)
        model = result.model
        history.append(result.record)
        logger.info(f"Epoch {epoch + 1}/{params.epochs}: mean loss {result.record.mean_loss:.4f}")
    return model, history
