"""
COCO-protocol average precision.

Detections and ground truth are keyed by image (any hashable key, e.g. a
timestamp). Matching is per class and greedy in descending score order: a
detection takes the unmatched ground truth of its class with the highest IoU
(non-ignored boxes first, lowest index on ties) provided the IoU reaches the
threshold. Ground truth outside the area range is ignored; detections matched
to it, and unmatched detections outside the range, count as neither true nor
false positives. AP uses 101-point interpolation of the precision envelope.
"""

import math
from typing import Dict, Hashable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field, field_validator

from ..core.exceptions import ArgumentError
from ..core.models import Detection, GroundTruthBox
from ..detector.boxes import iou_matrix

IOU_THRESHOLDS = tuple(float(t) for t in np.round(np.linspace(0.5, 0.95, 10), 2))
RECALL_GRID = np.linspace(0.0, 1.0, 101)
AREA_ALL = (0.0, math.inf)
AREA_SMALL = (0.0, 32.0 ** 2)
AREA_MEDIUM = (32.0 ** 2, 96.0 ** 2)
AREA_LARGE = (96.0 ** 2, math.inf)

DetectionsByImage = Mapping[Hashable, Sequence[Detection]]
LabelsByImage = Mapping[Hashable, Sequence[GroundTruthBox]]


class EvalBundle(BaseModel):
    """COCO summary metrics; ``None`` marks an undefined stratum."""

    map: Optional[float] = Field(None, description="Mean AP over IoU 0.50:0.95 and classes")
    ap50: Optional[float] = None
    ap75: Optional[float] = None
    ap_s: Optional[float] = None
    ap_m: Optional[float] = None
    ap_l: Optional[float] = None
    per_class: Dict[int, Optional[float]] = Field(default_factory=dict)

    @field_validator("map", "ap50", "ap75", "ap_s", "ap_m", "ap_l")
    @classmethod
    def check_range(cls, value):
        if value is not None and not 0.0 <= value <= 1.0:
            raise ValueError(f"AP {value} outside [0, 1]")
        return value


def _image_keys(dets: DetectionsByImage, gts: LabelsByImage) -> List[Hashable]:
    keys = list(dets.keys())
    seen = set(keys)
    keys.extend(k for k in gts.keys() if k not in seen)
    return keys


def _in_range(area: float, area_range: Tuple[float, float]) -> bool:
    return area_range[0] <= area < area_range[1]


def interpolated_ap(tp: np.ndarray, fp: np.ndarray, positives: int) -> float:
    """101-point AP from per-detection TP/FP flags in score order."""
    if tp.size == 0:
        return 0.0
    tp_cum = np.cumsum(tp)
    fp_cum = np.cumsum(fp)
    recall = tp_cum / positives
    precision = tp_cum / np.maximum(tp_cum + fp_cum, np.finfo(np.float64).eps)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    positions = np.searchsorted(recall, RECALL_GRID, side="left")
    sampled = np.where(positions < envelope.size, envelope[np.minimum(positions, envelope.size - 1)], 0.0)
    return float(np.mean(sampled))


def average_precision(
    dets: DetectionsByImage,
    gts: LabelsByImage,
    iou_threshold: float,
    area_range: Tuple[float, float] = AREA_ALL,
    class_id: Optional[int] = None,
) -> Optional[float]:
    """
    AP of one class (or of all classes pooled when ``class_id`` is None) at
    one IoU threshold and area range.

    Returns:
        AP in ``[0, 1]``, or ``None`` when no non-ignored ground truth exists

    Raises:
        ArgumentError: If ``iou_threshold`` is outside ``(0, 1]``
    """
    if not 0.0 < iou_threshold <= 1.0:
        raise ArgumentError(f"IoU threshold {iou_threshold} outside (0, 1]", field="iou_threshold")

    scored = []
    positives = 0
    per_image = {}
    for key in _image_keys(dets, gts):
        image_gts = [g for g in gts.get(key, ()) if class_id is None or g.class_id == class_id]
        image_dets = [d for d in dets.get(key, ()) if class_id is None or d.class_id == class_id]
        ignored = np.array([not _in_range(g.area, area_range) for g in image_gts], dtype=bool)
        positives += int((~ignored).sum())
        overlaps = iou_matrix([d.box for d in image_dets], [g.box for g in image_gts])
        gt_classes = np.array([g.class_id for g in image_gts], dtype=np.int64)
        per_image[key] = (image_dets, ignored, overlaps, gt_classes, np.zeros(len(image_gts), dtype=bool))
        for index, det in enumerate(image_dets):
            scored.append((-det.score, len(scored), key, index))
    if positives == 0:
        return None
    scored.sort(key=lambda item: (item[0], item[1]))

    tp = np.zeros(len(scored))
    fp = np.zeros(len(scored))
    for rank, (_, _, key, index) in enumerate(scored):
        image_dets, ignored, overlaps, gt_classes, matched = per_image[key]
        det = image_dets[index]
        candidates = np.flatnonzero(
            (~matched) & (gt_classes == det.class_id) & (overlaps[index] >= iou_threshold)
        ) if matched.size else np.zeros(0, dtype=np.int64)
        if candidates.size:
            # Non-ignored first, then highest IoU, then lowest index.
            best = min(candidates, key=lambda g: (ignored[g], -overlaps[index, g], g))
            matched[best] = True
            if not ignored[best]:
                tp[rank] = 1.0
        elif _in_range(det.area, area_range):
            fp[rank] = 1.0
    counted = (tp + fp) > 0
    return interpolated_ap(tp[counted], fp[counted], positives)


def _mean_defined(values: Sequence[Optional[float]]) -> Optional[float]:
    defined = [v for v in values if v is not None]
    return float(np.mean(defined)) if defined else None


def coco_map(dets: DetectionsByImage, gts: LabelsByImage) -> EvalBundle:
    """
    mAP, AP50, AP75 and area-stratified AP over the classes that have ground
    truth. Undefined strata are left out of every mean.
    """
    classes = sorted({g.class_id for boxes in gts.values() for g in boxes})

    def stratum(area_range, thresholds=IOU_THRESHOLDS) -> Optional[float]:
        return _mean_defined(
            [average_precision(dets, gts, t, area_range, c) for c in classes for t in thresholds]
        )

    per_class = {
        c: _mean_defined([average_precision(dets, gts, t, AREA_ALL, c) for t in IOU_THRESHOLDS])
        for c in classes
    }
    return EvalBundle(
        map=_mean_defined(list(per_class.values())),
        ap50=stratum(AREA_ALL, (0.5,)),
        ap75=stratum(AREA_ALL, (0.75,)),
        ap_s=stratum(AREA_SMALL),
        ap_m=stratum(AREA_MEDIUM),
        ap_l=stratum(AREA_LARGE),
        per_class=per_class,
    )
