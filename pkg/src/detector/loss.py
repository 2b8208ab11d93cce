"""
Detection loss: IoU loss, classification BCE and L1 box regression.

Each ground-truth box is assigned to the head cell containing its center
(the first box in list order wins a contested cell). Positive-cell terms are
normalised by ``max(1, positives)``; the objectness BCE is averaged over all
cells, positives and negatives alike.

Box parametrisation of cell ``(i, j)`` at stride ``s``::

    tx = cx / s - (j + 0.5)    tw = log(w / s)
    ty = cy / s - (i + 0.5)    th = log(h / s)
"""

import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator
from scipy.special import expit

from ..core.logging import get_logger
from ..core.models import GroundTruthBox
from .model import BOX_LOG_LIMIT, HeadOutput

logger = get_logger(__name__)


class LossBreakdown(BaseModel):
    """Loss components and their sum."""
    model_config = ConfigDict(frozen=True)

    iou_loss: float
    cls_loss: float
    reg_loss: float
    fuse_reg: float = 0.0
    total: float

    @model_validator(mode="after")
    def check_total(self):
        parts = (self.iou_loss, self.cls_loss, self.reg_loss, self.fuse_reg)
        if all(math.isfinite(p) for p in parts) and math.isfinite(self.total):
            if min(parts) < -1e-12:
                raise ValueError("loss components must be non-negative")
            if abs(sum(parts) - self.total) > 1e-9 * max(1.0, abs(self.total)):
                raise ValueError("total must equal the sum of the components")
        return self

    @classmethod
    def compose(cls, iou_loss: float, cls_loss: float, reg_loss: float, fuse_reg: float = 0.0) -> "LossBreakdown":
        return cls(
            iou_loss=iou_loss,
            cls_loss=cls_loss,
            reg_loss=reg_loss,
            fuse_reg=fuse_reg,
            total=iou_loss + cls_loss + reg_loss + fuse_reg,
        )

    @property
    def is_finite(self) -> bool:
        return math.isfinite(self.total)

    @classmethod
    def weighted_sum(cls, parts: Sequence[Tuple[float, "LossBreakdown"]], normalizer: float) -> "LossBreakdown":
        """``sum(weight * part) / normalizer`` component by component."""
        def combine(attr: str) -> float:
            return sum(weight * getattr(part, attr) for weight, part in parts) / normalizer

        return cls.compose(combine("iou_loss"), combine("cls_loss"), combine("reg_loss"), combine("fuse_reg"))


def assign_targets(
    gts: Sequence[GroundTruthBox], grid: Tuple[int, int], stride: int
) -> List[Tuple[int, int, GroundTruthBox]]:
    """``(row, col, box)`` for every ground truth that wins its center cell."""
    grid_h, grid_w = grid
    taken = set()
    assigned = []
    for gt in gts:
        x_min, y_min, x_max, y_max = gt.box
        col = min(max(int(math.floor((x_min + x_max) / 2 / stride)), 0), grid_w - 1)
        row = min(max(int(math.floor((y_min + y_max) / 2 / stride)), 0), grid_h - 1)
        if (row, col) in taken:
            logger.debug(f"Cell ({row}, {col}) already assigned, skipping track {gt.track_id}")
            continue
        taken.add((row, col))
        assigned.append((row, col, gt))
    return assigned


def box_targets(gt: GroundTruthBox, row: int, col: int, stride: int) -> np.ndarray:
    x_min, y_min, x_max, y_max = gt.box
    return np.array(
        [
            (x_min + x_max) / 2 / stride - (col + 0.5),
            (y_min + y_max) / 2 / stride - (row + 0.5),
            math.log((x_max - x_min) / stride),
            math.log((y_max - y_min) / stride),
        ]
    )


def _iou_and_grad(offsets: np.ndarray, row: int, col: int, stride: int, gt_box) -> Tuple[float, np.ndarray]:
    """IoU of the decoded cell box with ``gt_box`` and its gradient w.r.t. the offsets."""
    ox, oy, ow, oh = offsets
    cx = (col + 0.5 + ox) * stride
    cy = (row + 0.5 + oy) * stride
    width = math.exp(min(max(ow, -BOX_LOG_LIMIT), BOX_LOG_LIMIT)) * stride
    height = math.exp(min(max(oh, -BOX_LOG_LIMIT), BOX_LOG_LIMIT)) * stride
    x1, x2 = cx - width / 2, cx + width / 2
    y1, y2 = cy - height / 2, cy + height / 2
    gx1, gy1, gx2, gy2 = gt_box

    inter_w = min(x2, gx2) - max(x1, gx1)
    inter_h = min(y2, gy2) - max(y1, gy1)
    if inter_w <= 0 or inter_h <= 0:
        return 0.0, np.zeros(4)
    inter = inter_w * inter_h
    union = width * height + (gx2 - gx1) * (gy2 - gy1) - inter
    value = inter / union

    d_inter = (union + inter) / union ** 2
    d_area = -inter / union ** 2
    d_x1 = d_inter * (-inter_h if x1 > gx1 else 0.0) + d_area * (-height)
    d_x2 = d_inter * (inter_h if x2 < gx2 else 0.0) + d_area * height
    d_y1 = d_inter * (-inter_w if y1 > gy1 else 0.0) + d_area * (-width)
    d_y2 = d_inter * (inter_w if y2 < gy2 else 0.0) + d_area * width

    grad = np.array(
        [
            stride * (d_x1 + d_x2),
            stride * (d_y1 + d_y2),
            (width / 2) * (d_x2 - d_x1) * (abs(ow) < BOX_LOG_LIMIT),
            (height / 2) * (d_y2 - d_y1) * (abs(oh) < BOX_LOG_LIMIT),
        ]
    )
    return value, grad


def _loss_terms(
    head: HeadOutput, gts: Sequence[GroundTruthBox], with_grad: bool
) -> Tuple[LossBreakdown, Optional[np.ndarray]]:
    raw = head.raw.astype(np.float64)
    k = head.num_classes
    stride = head.stride
    grid_h, grid_w = head.grid
    cells = grid_h * grid_w
    assigned = assign_targets(gts, head.grid, stride)
    positives = max(1, len(assigned))
    d_raw = np.zeros_like(raw) if with_grad else None

    objectness = raw[0]
    obj_target = np.zeros((grid_h, grid_w))
    for row, col, _ in assigned:
        obj_target[row, col] = 1.0
    obj_loss = float(np.mean(np.logaddexp(0.0, objectness) - obj_target * objectness))
    if with_grad:
        d_raw[0] = (expit(objectness) - obj_target) / cells

    class_loss = 0.0
    iou_loss = 0.0
    reg_loss = 0.0
    for row, col, gt in assigned:
        logits = raw[1:1 + k, row, col]
        onehot = np.zeros(k)
        if gt.class_id < k:
            onehot[gt.class_id] = 1.0
        class_loss += float(np.sum(np.logaddexp(0.0, logits) - onehot * logits))

        offsets = raw[1 + k:, row, col]
        targets = box_targets(gt, row, col, stride)
        reg_loss += float(np.sum(np.abs(offsets - targets)))
        overlap, d_overlap = _iou_and_grad(offsets, row, col, stride, gt.box)
        iou_loss += 1.0 - overlap

        if with_grad:
            d_raw[1:1 + k, row, col] = (expit(logits) - onehot) / positives
            d_raw[1 + k:, row, col] = (np.sign(offsets - targets) - d_overlap) / positives

    breakdown = LossBreakdown.compose(
        iou_loss=iou_loss / positives,
        cls_loss=obj_loss + class_loss / positives,
        reg_loss=reg_loss / positives,
        fuse_reg=float(head.fuse_reg),
    )
    return breakdown, d_raw


def detection_loss(head: HeadOutput, gts: Sequence[GroundTruthBox]) -> LossBreakdown:
    """
    Loss of one head output against its ground truth.

    With no ground truth the IoU and regression terms are zero and the
    classification term is the objectness BCE against all-negative targets.
    ``fuse_reg`` is taken from the head output.
    """
    breakdown, _ = _loss_terms(head, gts, with_grad=False)
    return breakdown


def detection_loss_and_grad(
    head: HeadOutput, gts: Sequence[GroundTruthBox]
) -> Tuple[LossBreakdown, np.ndarray]:
    """``detection_loss`` plus its gradient w.r.t. ``head.raw`` (regulariser excluded)."""
    breakdown, d_raw = _loss_terms(head, gts, with_grad=True)
    return breakdown, d_raw
