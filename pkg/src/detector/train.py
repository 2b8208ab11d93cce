"""
One optimisation step of the toy detector.

A batch mixes ground-truth items and (optionally) pseudo-labelled items. The
batch objective is::

    (sum_gt L_i + sum_pseudo w_i * L_i) / n_gt

so the pseudo weight scales the pseudo-labelled terms while the
normalisation stays tied to the ground-truth items. Items with zero weight
are skipped entirely (no forward pass, no noise draw).
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..core.exceptions import ArgumentError, TrainingError
from ..core.logging import get_logger
from ..core.models import GroundTruthBox
from ..events.voxel import EventTensor
from .loss import LossBreakdown, detection_loss_and_grad
from .model import DetectMode, ToyModel

logger = get_logger(__name__)


class ItemKind(str, Enum):
    GT = "gt"
    PSEUDO = "pseudo"


@dataclass(frozen=True, eq=False)
class TrainItem:
    """
    One training example.

    Attributes:
        frame: Paired frame ``(H, W)`` (ignored in event-only mode)
        events_a: Full-window tensor (low-frequency branch)
        events_b: Sub-window tensor (high-frequency branch)
        gts: Target boxes (ground truth or pseudo-labels)
        weight: Loss weight; ground-truth items use 1
        kind: Ground-truth or pseudo-labelled item
    """

    frame: Optional[np.ndarray]
    events_a: EventTensor
    events_b: EventTensor
    gts: Sequence[GroundTruthBox]
    weight: float = 1.0
    kind: ItemKind = ItemKind.GT


@dataclass(frozen=True, eq=False)
class StepOutcome:
    model: ToyModel
    loss: LossBreakdown
    item_losses: Tuple[Tuple[TrainItem, LossBreakdown], ...]
    grad_norm: float


def batch_gradients(
    model: ToyModel,
    batch: Sequence[TrainItem],
    rng: np.random.Generator,
    mode: DetectMode = DetectMode.FUSED,
) -> Tuple[LossBreakdown, Dict[str, np.ndarray], List[Tuple[TrainItem, LossBreakdown]]]:
    """Batch loss, its parameter gradients and the per-item losses."""
    active = [item for item in batch if item.weight > 0]
    if not active:
        raise TrainingError("batch has no item with positive weight", batch_size=len(batch))
    normalizer = sum(1 for item in active if item.kind == ItemKind.GT) or len(active)

    grads = {name: np.zeros_like(value) for name, value in model.params.items()}
    item_losses = []
    for item in active:
        features_a = model.event_features(item.events_a)
        features_b = model.event_features(item.events_b)
        frame = None if DetectMode(mode) == DetectMode.EVENT_ONLY else model.frame_features(item.frame)
        try:
            head, cache = model.forward(features_a, features_b, frame, mode, training=True, rng=rng)
        except ArgumentError as exc:
            if "non-finite" not in exc.detail:
                raise
            raise TrainingError("non-finite activations in forward pass", reason=exc.detail) from exc
        breakdown, d_raw = detection_loss_and_grad(head, item.gts)
        item_losses.append((item, breakdown))
        if not breakdown.is_finite:
            continue
        scale = item.weight / normalizer
        for name, value in model.backward(cache, scale * d_raw, reg_weight=scale).items():
            grads[name] += value
    loss = LossBreakdown.weighted_sum([(item.weight, b) for item, b in item_losses], normalizer)
    return loss, grads, item_losses


def gradient_step(
    model: ToyModel,
    batch: Sequence[TrainItem],
    lr: float,
    rng: np.random.Generator,
    mode: DetectMode = DetectMode.FUSED,
    max_grad_norm: Optional[float] = None,
) -> StepOutcome:
    """
    SGD step returning the new model, the batch loss and per-item losses.

    The input model is left untouched. Noise scales are clamped at zero
    after the update.

    Raises:
        TrainingError: On a negative learning rate, an empty batch, or a
            non-finite loss or gradient
    """
    if not math.isfinite(lr) or lr < 0:
        raise TrainingError(f"learning rate must be a finite value >= 0, got {lr}")
    if len(batch) == 0:
        raise TrainingError("empty batch")
    if not all(np.all(np.isfinite(value)) for value in model.params.values()):
        raise TrainingError("model parameters contain non-finite values")

    loss, grads, item_losses = batch_gradients(model, batch, rng, mode)
    if not loss.is_finite:
        raise TrainingError("non-finite loss", breakdown=loss.model_dump())
    norm = math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values()))
    if not math.isfinite(norm):
        raise TrainingError("non-finite gradient", breakdown=loss.model_dump())
    factor = 1.0
    if max_grad_norm is not None and norm > max_grad_norm > 0:
        factor = max_grad_norm / norm

    params = {}
    for name, value in model.params.items():
        updated = value - (lr * factor) * grads[name]
        if name.endswith(".sigma"):
            updated = np.maximum(updated, 0)
        params[name] = updated.astype(value.dtype, copy=False)
    return StepOutcome(
        model=ToyModel(model.spec, params),
        loss=loss,
        item_losses=tuple(item_losses),
        grad_norm=norm,
    )


def train_step(
    model: ToyModel,
    batch: Sequence[TrainItem],
    lr: float,
    rng: np.random.Generator,
    mode: DetectMode = DetectMode.FUSED,
    max_grad_norm: Optional[float] = None,
) -> Tuple[ToyModel, LossBreakdown]:
    """
    One SGD step on ``batch``.

    Args:
        model: Current model (not modified)
        batch: Training items
        lr: Learning rate; 0 leaves the parameters unchanged
        rng: Generator for the gate noise
        mode: Fused or event-only training
        max_grad_norm: Optional global gradient-norm clip

    Returns:
        ``(new_model, loss)``
    """
    outcome = gradient_step(model, batch, lr, rng, mode, max_grad_norm)
    logger.debug(f"Step loss {outcome.loss.total:.6f} (grad norm {outcome.grad_norm:.4f})")
    return outcome.model, outcome.loss
