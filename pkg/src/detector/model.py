"""
Two-scale toy detector with per-scale fusion and a dense head.

Layout (stride-2 patchify convolutions written as reshapes and matmuls)::

    events (2T, H, W) --conv1--> (c1, H/2, W/2) --conv2--> (c2, H/4, W/4)
    frame  (1,  H, W) --conv1--> (c1, H/2, W/2) --conv2--> (c2, H/4, W/4)
                                  | fuse1                 | fuse2
                         space-to-depth (4*c1) ++ (c2)  --hidden--> out

Both event branches (full window and high-frequency sub-window) share the
event extractor. Every head cell at stride 4 predicts one objectness logit,
``num_classes`` class logits and four box offsets.

Parameters are a flat ``name -> array`` dict; gradients use the same keys.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Literal, Optional, Protocol, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.special import expit

from ..core.exceptions import ArgumentError
from ..core.models import Detection
from ..core.seeding import rng_stream
from ..events.voxel import EventTensor
from ..fusion.block import BlockCache, FusionMode, block_backward, block_forward, init_block_params
from ..fusion.gate import FeatureMap, GateWeights, fusion_regularizer, regularizer_gradients

STRIDE = 4
SCORE_FLOOR = 0.01
BOX_LOG_LIMIT = 6.0
OBJECTNESS_PRIOR = 0.01
HE_LAYERS = (
    ("event.conv1.w", "event.conv1.b"),
    ("event.conv2.w", "event.conv2.b"),
    ("frame.conv1.w", "frame.conv1.b"),
    ("frame.conv2.w", "frame.conv2.b"),
    ("head.w1", "head.b1"),
)


class DetectMode(str, Enum):
    FUSED = "fused"
    EVENT_ONLY = "event_only"


class Detector(Protocol):
    """Anything that turns one event tensor (and a frame) into detections."""

    def detect(
        self, tensor: EventTensor, frame: Optional[np.ndarray], mode: DetectMode = DetectMode.FUSED
    ) -> List[Detection]:
        ...


class ModelSpec(BaseModel):
    """Architecture and fusion settings of a ``ToyModel``."""
    model_config = ConfigDict(frozen=True)

    bins: int = Field(..., ge=1, description="Temporal bins T of the input tensors")
    height: int = Field(..., ge=STRIDE)
    width: int = Field(..., ge=STRIDE)
    num_classes: int = Field(2, ge=1)
    c1: int = Field(8, ge=1)
    c2: int = Field(16, ge=1)
    hidden: int = Field(32, ge=1)
    fusion_mode: FusionMode = FusionMode.GATED
    lambda_reg: float = Field(0.01, ge=0)
    gate_noise: bool = True
    noise_per_map: bool = False
    sigma_init: float = Field(0.1, ge=0)
    dtype: Literal["float32", "float64"] = "float32"

    @model_validator(mode="after")
    def check_size(self):
        if self.height % STRIDE or self.width % STRIDE:
            raise ValueError(f"height and width must be multiples of {STRIDE}")
        return self

    @property
    def grid(self) -> Tuple[int, int]:
        return self.height // STRIDE, self.width // STRIDE

    @property
    def output_channels(self) -> int:
        return 1 + self.num_classes + 4


def space_to_depth(x: np.ndarray) -> np.ndarray:
    """``(C, H, W)`` to ``(4C, H/2 * W/2)``: each column is one 2x2 patch."""
    channels, height, width = x.shape
    blocks = x.reshape(channels, height // 2, 2, width // 2, 2).transpose(0, 2, 4, 1, 3)
    return blocks.reshape(4 * channels, -1)


def depth_to_space(columns: np.ndarray, channels: int, height: int, width: int) -> np.ndarray:
    """Inverse of ``space_to_depth`` for an ``(C, height, width)`` map."""
    blocks = columns.reshape(channels, 2, 2, height // 2, width // 2).transpose(0, 3, 1, 4, 2)
    return blocks.reshape(channels, height, width)


def expected_shapes(spec: ModelSpec) -> Dict[str, Tuple[int, ...]]:
    """Name and shape of every parameter of ``spec``."""
    shapes = {
        "event.conv1.w": (spec.c1, 4 * 2 * spec.bins),
        "event.conv1.b": (spec.c1,),
        "event.conv2.w": (spec.c2, 4 * spec.c1),
        "event.conv2.b": (spec.c2,),
        "frame.conv1.w": (spec.c1, 4),
        "frame.conv1.b": (spec.c1,),
        "frame.conv2.w": (spec.c2, 4 * spec.c1),
        "frame.conv2.b": (spec.c2,),
        "head.w1": (spec.hidden, 4 * spec.c1 + spec.c2),
        "head.b1": (spec.hidden,),
        "head.w2": (spec.output_channels, spec.hidden),
        "head.b2": (spec.output_channels,),
    }
    for prefix, channels in (("fuse1", spec.c1), ("fuse2", spec.c2)):
        shapes[f"{prefix}.gate_w"] = (2 * channels, 2)
        shapes[f"{prefix}.sigma"] = (1,)
        shapes[f"{prefix}.proj"] = (channels, channels)
        if spec.fusion_mode == FusionMode.CONCAT:
            shapes[f"{prefix}.mix"] = (channels, 2 * channels)
    return shapes


def init_params(spec: ModelSpec, seed: int) -> Dict[str, np.ndarray]:
    """He-normal weights from the ``init`` stream, objectness bias at a low prior."""
    rng = rng_stream(seed, "init")
    dtype = np.dtype(spec.dtype)
    params: Dict[str, np.ndarray] = {}
    shapes = expected_shapes(spec)
    for weight, bias in HE_LAYERS:
        rows, fan_in = shapes[weight]
        params[weight] = (rng.standard_normal((rows, fan_in)) * np.sqrt(2.0 / fan_in)).astype(dtype)
        params[bias] = np.zeros(rows, dtype=dtype)
    params["head.w2"] = (rng.standard_normal((spec.output_channels, spec.hidden)) * 0.01).astype(dtype)
    head_bias = np.zeros(spec.output_channels, dtype=dtype)
    head_bias[0] = np.log(OBJECTNESS_PRIOR / (1.0 - OBJECTNESS_PRIOR))
    params["head.b2"] = head_bias
    params.update(init_block_params("fuse1", spec.c1, spec.fusion_mode, spec.sigma_init, dtype))
    params.update(init_block_params("fuse2", spec.c2, spec.fusion_mode, spec.sigma_init, dtype))
    return params


@dataclass(eq=False)
class BackboneCache:
    x1: np.ndarray
    z1: np.ndarray
    x2: np.ndarray
    z2: np.ndarray
    scale1: np.ndarray
    scale2: np.ndarray


def _backbone(params: Dict[str, np.ndarray], prefix: str, x: np.ndarray) -> BackboneCache:
    _, height, width = x.shape
    x1 = space_to_depth(x)
    z1 = params[f"{prefix}.conv1.w"] @ x1 + params[f"{prefix}.conv1.b"][:, None]
    scale1 = np.maximum(z1, 0).reshape(-1, height // 2, width // 2)
    x2 = space_to_depth(scale1)
    z2 = params[f"{prefix}.conv2.w"] @ x2 + params[f"{prefix}.conv2.b"][:, None]
    scale2 = np.maximum(z2, 0).reshape(-1, height // 4, width // 4)
    return BackboneCache(x1=x1, z1=z1, x2=x2, z2=z2, scale1=scale1, scale2=scale2)


def _backbone_backward(
    params: Dict[str, np.ndarray],
    prefix: str,
    cache: BackboneCache,
    d_scale1: np.ndarray,
    d_scale2: np.ndarray,
    grads: Dict[str, np.ndarray],
) -> None:
    d_z2 = d_scale2.reshape(d_scale2.shape[0], -1) * (cache.z2 > 0)
    grads[f"{prefix}.conv2.w"] += d_z2 @ cache.x2.T
    grads[f"{prefix}.conv2.b"] += d_z2.sum(axis=1)
    channels, height, width = cache.scale1.shape
    d_x2 = params[f"{prefix}.conv2.w"].T @ d_z2
    d_s1 = d_scale1 + depth_to_space(d_x2, channels, height, width)
    d_z1 = d_s1.reshape(channels, -1) * (cache.z1 > 0)
    grads[f"{prefix}.conv1.w"] += d_z1 @ cache.x1.T
    grads[f"{prefix}.conv1.b"] += d_z1.sum(axis=1)


@dataclass(frozen=True, eq=False)
class HeadOutput:
    """
    Raw head predictions.

    Attributes:
        raw: Array of shape ``(1 + K + 4, H/4, W/4)``: objectness logit, class
            logits, then box offsets ``(ox, oy, ow, oh)``
        num_classes: ``K``
        stride: Pixels per head cell
        fuse_reg: Fusion regulariser of the forward pass
        gates: Gate weights of every gated fusion (empty otherwise)
    """

    raw: np.ndarray
    num_classes: int
    stride: int = STRIDE
    fuse_reg: float = 0.0
    gates: Tuple[GateWeights, ...] = field(default=(), repr=False)

    @property
    def grid(self) -> Tuple[int, int]:
        return self.raw.shape[1], self.raw.shape[2]

    @property
    def objectness(self) -> np.ndarray:
        return self.raw[0]

    @property
    def class_logits(self) -> np.ndarray:
        return self.raw[1:1 + self.num_classes]

    @property
    def box_offsets(self) -> np.ndarray:
        return self.raw[1 + self.num_classes:]


@dataclass(eq=False)
class ForwardCache:
    event_only: bool
    branch_a: BackboneCache
    branch_b: BackboneCache
    frame: Optional[BackboneCache]
    fuse1: BlockCache
    fuse2: BlockCache
    head_in: np.ndarray
    hidden_pre: np.ndarray
    hidden: np.ndarray
    gates: Tuple[GateWeights, ...]


def decode_boxes(offsets: np.ndarray, stride: int = STRIDE) -> np.ndarray:
    """
    Offsets ``(4, gh, gw)`` to corner boxes ``(gh, gw, 4)``.

    ``cx = (j + 0.5 + ox) * stride``, ``w = exp(ow) * stride`` and likewise
    for ``y`` and ``h``.
    """
    grid_h, grid_w = offsets.shape[1:]
    cols = np.arange(grid_w)[None, :]
    rows = np.arange(grid_h)[:, None]
    cx = (cols + 0.5 + offsets[0]) * stride
    cy = (rows + 0.5 + offsets[1]) * stride
    w = np.exp(np.clip(offsets[2], -BOX_LOG_LIMIT, BOX_LOG_LIMIT)) * stride
    h = np.exp(np.clip(offsets[3], -BOX_LOG_LIMIT, BOX_LOG_LIMIT)) * stride
    return np.stack([cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2], axis=-1)


def decode_head(head: HeadOutput, t: int, width: int, height: int,
                score_floor: float = SCORE_FLOOR) -> List[Detection]:
    """
    One detection per head cell whose best-class score reaches ``score_floor``.

    The score is ``sigmoid(objectness) * sigmoid(class logit)`` of the best
    class (ties go to the lowest class id). Boxes are clipped to the sensor
    and cells whose clipped box is empty are skipped.
    """
    raw = head.raw.astype(np.float64)
    objectness = expit(raw[0])
    class_prob = expit(raw[1:1 + head.num_classes])
    best = np.argmax(class_prob, axis=0)
    scores = objectness * np.take_along_axis(class_prob, best[None], axis=0)[0]
    boxes = decode_boxes(raw[1 + head.num_classes:], head.stride)
    detections = []
    for i, j in zip(*np.nonzero(scores >= score_floor)):
        x_min, y_min, x_max, y_max = boxes[i, j]
        x_min, x_max = max(x_min, 0.0), min(x_max, float(width))
        y_min, y_max = max(y_min, 0.0), min(y_max, float(height))
        if not (x_min < x_max and y_min < y_max):
            continue
        detections.append(
            Detection(
                box=(float(x_min), float(y_min), float(x_max), float(y_max)),
                class_id=int(best[i, j]),
                score=float(min(scores[i, j], 1.0)),
                t=int(t),
            )
        )
    return detections


@dataclass(eq=False)
class ToyModel:
    """Parameters plus architecture; ``detect`` makes it a ``Detector``."""

    spec: ModelSpec
    params: Dict[str, np.ndarray]

    def __post_init__(self):
        shapes = expected_shapes(self.spec)
        if set(shapes) != set(self.params):
            missing = sorted(set(shapes) - set(self.params))
            extra = sorted(set(self.params) - set(shapes))
            raise ArgumentError(f"parameter names mismatch (missing {missing}, extra {extra})", field="params")
        for name, shape in shapes.items():
            if tuple(self.params[name].shape) != shape:
                raise ArgumentError(
                    f"parameter {name} has shape {self.params[name].shape}, expected {shape}", field=name
                )

    @classmethod
    def initialize(cls, spec: ModelSpec, seed: int) -> "ToyModel":
        return cls(spec, init_params(spec, seed))

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(self.spec.dtype)

    @property
    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def copy(self) -> "ToyModel":
        return ToyModel(self.spec, {name: value.copy() for name, value in self.params.items()})

    def event_features(self, tensor: EventTensor) -> np.ndarray:
        """``log1p`` counts reshaped to ``(2T, H, W)``."""
        spec = self.spec
        if (tensor.spec.T, tensor.spec.H, tensor.spec.W) != (spec.bins, spec.height, spec.width):
            raise ArgumentError(
                f"tensor {tensor.spec.shape} does not match model input "
                f"(2, {spec.bins}, {spec.height}, {spec.width})",
                field="tensor",
            )
        return np.log1p(tensor.data.astype(self.dtype)).reshape(2 * spec.bins, spec.height, spec.width)

    def frame_features(self, frame: Optional[np.ndarray]) -> np.ndarray:
        if frame is None:
            raise ArgumentError("fused mode needs a frame", field="frame")
        frame = np.asarray(frame)
        if frame.shape != (self.spec.height, self.spec.width):
            raise ArgumentError(
                f"frame shape {frame.shape} does not match ({self.spec.height}, {self.spec.width})",
                field="frame",
            )
        return frame.astype(self.dtype)[None]

    def forward(
        self,
        events_a: np.ndarray,
        events_b: np.ndarray,
        frame: Optional[np.ndarray],
        mode: DetectMode = DetectMode.FUSED,
        training: bool = False,
        rng: Optional[np.random.Generator] = None,
    ) -> Tuple[HeadOutput, ForwardCache]:
        """
        Run the network on prepared features.

        Args:
            events_a: Full-window event features ``(2T, H, W)``
            events_b: Sub-window event features ``(2T, H, W)``
            frame: Frame features ``(1, H, W)``; ignored in event-only mode
            mode: Fused or event-only
            training: Draw gate noise (when the spec enables it)
            rng: Generator for the gate noise
        """
        spec = self.spec
        params = self.params
        event_only = DetectMode(mode) == DetectMode.EVENT_ONLY
        branch_a = _backbone(params, "event", events_a)
        branch_b = _backbone(params, "event", events_b)
        frame_cache = None if event_only else _backbone(params, "frame", frame)
        noisy = training and spec.gate_noise

        fused = []
        block_caches = []
        for prefix, scale in (("fuse1", "scale1"), ("fuse2", "scale2")):
            out, block_cache = block_forward(
                params,
                prefix,
                FeatureMap(getattr(branch_a, scale)),
                FeatureMap(getattr(branch_b, scale)),
                None if event_only else FeatureMap(getattr(frame_cache, scale)),
                spec.fusion_mode,
                event_only,
                noisy,
                rng,
                lambda_reg=spec.lambda_reg,
                noise_per_map=spec.noise_per_map,
            )
            fused.append(out)
            block_caches.append(block_cache)

        head_in = np.concatenate([space_to_depth(fused[0].data), fused[1].flat()])
        hidden_pre = params["head.w1"] @ head_in + params["head.b1"][:, None]
        hidden = np.maximum(hidden_pre, 0)
        out = params["head.w2"] @ hidden + params["head.b2"][:, None]
        raw = out.reshape(spec.output_channels, *spec.grid)

        gates = tuple(block_caches[0].weights) + tuple(block_caches[1].weights)
        fuse_reg = fusion_regularizer(gates, spec.lambda_reg) if gates else 0.0
        head = HeadOutput(raw=raw, num_classes=spec.num_classes, fuse_reg=fuse_reg, gates=gates)
        cache = ForwardCache(
            event_only=event_only,
            branch_a=branch_a,
            branch_b=branch_b,
            frame=frame_cache,
            fuse1=block_caches[0],
            fuse2=block_caches[1],
            head_in=head_in,
            hidden_pre=hidden_pre,
            hidden=hidden,
            gates=gates,
        )
        return head, cache

    def backward(self, cache: ForwardCache, d_raw: np.ndarray, reg_weight: float = 1.0) -> Dict[str, np.ndarray]:
        """
        Gradients of ``loss(raw) + reg_weight * fuse_reg`` for every parameter.

        Args:
            cache: Cache of the matching ``forward`` call
            d_raw: Gradient of the detection loss w.r.t. ``HeadOutput.raw``
            reg_weight: Factor on the fusion regulariser term
        """
        spec = self.spec
        params = self.params
        grads = {name: np.zeros_like(value) for name, value in params.items()}

        d_out = d_raw.reshape(spec.output_channels, -1).astype(self.dtype, copy=False)
        grads["head.w2"] += d_out @ cache.hidden.T
        grads["head.b2"] += d_out.sum(axis=1)
        d_hidden = (params["head.w2"].T @ d_out) * (cache.hidden_pre > 0)
        grads["head.w1"] += d_hidden @ cache.head_in.T
        grads["head.b1"] += d_hidden.sum(axis=1)
        d_head_in = params["head.w1"].T @ d_hidden

        half_h, half_w = spec.height // 2, spec.width // 2
        d_fused1 = depth_to_space(d_head_in[:4 * spec.c1], spec.c1, half_h, half_w)
        d_fused2 = d_head_in[4 * spec.c1:].reshape(spec.c2, *spec.grid)

        reg_grads = []
        if cache.gates and spec.lambda_reg > 0 and reg_weight != 0:
            reg_grads = [
                (reg_weight * d_alpha, reg_weight * d_beta)
                for d_alpha, d_beta in regularizer_gradients(cache.gates, spec.lambda_reg)
            ]
        reg1 = reg_grads[0:2] or None
        reg2 = reg_grads[2:4] or None

        g2, d_a2, d_b2, d_f2 = block_backward(params, "fuse2", cache.fuse2, d_fused2, reg2)
        g1, d_a1, d_b1, d_f1 = block_backward(params, "fuse1", cache.fuse1, d_fused1, reg1)
        for block_grads in (g1, g2):
            for name, value in block_grads.items():
                grads[name] += value.astype(grads[name].dtype, copy=False)

        _backbone_backward(params, "event", cache.branch_a, d_a1, d_a2, grads)
        _backbone_backward(params, "event", cache.branch_b, d_b1, d_b2, grads)
        if not cache.event_only:
            _backbone_backward(params, "frame", cache.frame, d_f1, d_f2, grads)
        return grads

    def detect(
        self, tensor: EventTensor, frame: Optional[np.ndarray], mode: DetectMode = DetectMode.FUSED
    ) -> List[Detection]:
        return detect(self, tensor, frame, mode)


def detect(
    model: ToyModel,
    tensor: EventTensor,
    frame: Optional[np.ndarray],
    mode: DetectMode = DetectMode.FUSED,
) -> List[Detection]:
    """
    Inference on one window.

    The tensor feeds both event branches; no gate noise is drawn, so the
    result is deterministic. Detections carry ``t = window.t2``.

    Raises:
        ArgumentError: On a shape mismatch, or fused mode without a frame
    """
    mode = DetectMode(mode)
    features = model.event_features(tensor)
    frame_features = None if mode == DetectMode.EVENT_ONLY else model.frame_features(frame)
    head, _ = model.forward(features, features, frame_features, mode, training=False)
    return decode_head(head, tensor.window.t2, model.spec.width, model.spec.height)
