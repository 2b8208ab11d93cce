"""
Noisy softmax gate that mixes event and frame features per location.

For every spatial location the gate reads the concatenated event and frame
features, projects them to two logits, perturbs the logits with learned-scale
Gaussian noise during training and normalises them with a softmax. The two
probabilities weight the event and frame features in the fused output. A
coefficient-of-variation regulariser keeps either expert from being ignored.

All backward passes are analytic and reuse the state cached by the forward
pass (logits, noise draws and softmax outputs).
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import softmax

from ..core.checkpoint import load_tensors, save_tensors
from ..core.exceptions import ArgumentError, DataError, StateError


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Finite real features of shape ``(C, H, W)``."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise ArgumentError(f"feature map must be (C, H, W), got shape {data.shape}", field="data")
        if not np.issubdtype(data.dtype, np.floating):
            data = data.astype(np.float64)
        if not np.all(np.isfinite(data)):
            raise ArgumentError("feature map contains non-finite values", field="data")
        object.__setattr__(self, "data", data)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def spatial(self) -> Tuple[int, int]:
        return self.data.shape[1], self.data.shape[2]

    def flat(self) -> np.ndarray:
        """View as ``(C, H * W)``."""
        return self.data.reshape(self.channels, -1)

    @classmethod
    def from_flat(cls, flat: np.ndarray, spatial: Tuple[int, int]) -> "FeatureMap":
        return cls(flat.reshape(flat.shape[0], *spatial))


@dataclass(eq=False)
class GateParams:
    """
    Gate parameters.

    Attributes:
        W: Gate projection of shape ``(C_E + C_F, 2)``
        sigma: Learned noise scale, kept non-negative
        lambda_reg: Weight of the coefficient-of-variation regulariser
        noise_per_map: Draw one noise pair per map instead of per location
    """

    W: np.ndarray
    sigma: float
    lambda_reg: float = 0.01
    noise_per_map: bool = False

    def __post_init__(self):
        self.W = np.asarray(self.W)
        if self.W.ndim != 2 or self.W.shape[1] != 2:
            raise ArgumentError(f"gate W must have shape (C, 2), got {self.W.shape}", field="W")
        if not np.all(np.isfinite(self.W)):
            raise ArgumentError("gate W contains non-finite values", field="W")
        if not np.isfinite(self.sigma) or self.sigma < 0:
            raise ArgumentError(f"sigma must be finite and >= 0, got {self.sigma}", field="sigma")
        if self.lambda_reg < 0:
            raise ArgumentError("lambda_reg must be >= 0", field="lambda_reg")

    @property
    def in_channels(self) -> int:
        return self.W.shape[0]

    @classmethod
    def zeros(cls, in_channels: int, sigma: float = 0.0, lambda_reg: float = 0.01,
              noise_per_map: bool = False) -> "GateParams":
        return cls(np.zeros((in_channels, 2)), sigma, lambda_reg, noise_per_map)


@dataclass(eq=False)
class GateCache:
    """Forward state needed by ``gate_gradients``."""

    shared: np.ndarray
    logits: np.ndarray
    noise: Optional[np.ndarray]
    alpha: np.ndarray
    beta: np.ndarray


@dataclass(frozen=True, eq=False)
class GateWeights:
    """Per-location event weight ``alpha`` and frame weight ``beta`` (``alpha + beta = 1``)."""

    alpha: np.ndarray
    beta: np.ndarray
    cache: Optional[GateCache] = field(default=None, repr=False)

    def __post_init__(self):
        if self.alpha.shape != self.beta.shape or self.alpha.ndim != 2:
            raise ArgumentError("alpha and beta must be (H, W) maps of equal shape", field="weights")
        if np.any(self.alpha < 0) or np.any(self.alpha > 1) or np.any(self.beta < 0) or np.any(self.beta > 1):
            raise ArgumentError("gate weights must lie in [0, 1]", field="weights")
        if np.max(np.abs(self.alpha + self.beta - 1.0), initial=0.0) > 1e-6:
            raise ArgumentError("alpha + beta must equal 1", field="weights")

    @property
    def spatial(self) -> Tuple[int, int]:
        return self.alpha.shape


@dataclass(frozen=True, eq=False)
class GateGradients:
    """Gradients of a scalar loss w.r.t. the gate parameters and its input."""

    W: np.ndarray
    sigma: float
    shared: np.ndarray


def concat_features(h_e: FeatureMap, h_f: FeatureMap) -> FeatureMap:
    """
    Stack event and frame features along channels.

    Raises:
        ArgumentError: If the spatial sizes differ
    """
    if h_e.spatial != h_f.spatial:
        raise ArgumentError(
            f"spatial mismatch: events {h_e.spatial} vs frame {h_f.spatial}", field="h_f"
        )
    return FeatureMap(np.concatenate([h_e.data, h_f.data], axis=0))


def gate_weights(
    h_shared: FeatureMap,
    params: GateParams,
    training: bool,
    rng: Optional[np.random.Generator] = None,
) -> GateWeights:
    """
    Compute the per-location mixing weights.

    In training mode the logits receive ``sigma * N(0, 1)`` noise drawn from
    ``rng``; in inference mode no noise is drawn and the result is
    deterministic.

    Raises:
        ArgumentError: On a channel mismatch, or training without ``rng``
    """
    if h_shared.channels != params.in_channels:
        raise ArgumentError(
            f"gate expects {params.in_channels} channels, got {h_shared.channels}",
            field="h_shared",
        )
    shared = h_shared.flat()
    logits = params.W.T.astype(shared.dtype, copy=False) @ shared
    noise = None
    if training:
        if rng is None:
            raise ArgumentError("training mode needs a random generator", field="rng")
        columns = 1 if params.noise_per_map else shared.shape[1]
        noise = rng.standard_normal((2, columns)).astype(shared.dtype, copy=False)
        logits = logits + params.sigma * noise
    probabilities = softmax(logits, axis=0)
    alpha, beta = probabilities[0], probabilities[1]
    spatial = h_shared.spatial
    cache = GateCache(shared=shared, logits=logits, noise=noise, alpha=alpha, beta=beta)
    return GateWeights(alpha=alpha.reshape(spatial), beta=beta.reshape(spatial), cache=cache)


def fuse(h_e: FeatureMap, h_f: FeatureMap, weights: GateWeights) -> FeatureMap:
    """
    Mix ``h_e`` and ``h_f`` with per-location weights.

    Raises:
        ArgumentError: If shapes disagree
    """
    if h_e.data.shape != h_f.data.shape:
        raise ArgumentError(
            f"event {h_e.data.shape} and frame {h_f.data.shape} features differ in shape", field="h_f"
        )
    if weights.spatial != h_e.spatial:
        raise ArgumentError("gate weights do not match the feature map", field="weights")
    return FeatureMap(weights.alpha[None] * h_e.data + weights.beta[None] * h_f.data)


def combine_frequencies(fused_a: FeatureMap, fused_b: FeatureMap) -> FeatureMap:
    """
    Sum the fused features of the two frequency branches.

    Raises:
        ArgumentError: If shapes disagree
    """
    if fused_a.data.shape != fused_b.data.shape:
        raise ArgumentError(
            f"cannot combine {fused_a.data.shape} with {fused_b.data.shape}", field="fused_b"
        )
    return FeatureMap(fused_a.data + fused_b.data)


def _pooled(weights: Sequence[GateWeights]) -> Tuple[np.ndarray, np.ndarray]:
    alpha = np.concatenate([w.alpha.ravel() for w in weights]).astype(np.float64)
    beta = np.concatenate([w.beta.ravel() for w in weights]).astype(np.float64)
    return alpha, beta


def _cv_squared(values: np.ndarray) -> float:
    mean = values.mean()
    if mean == 0:
        return 0.0
    return float(values.var() / (mean * mean))


def fusion_regularizer(weights: Sequence[GateWeights], lambda_reg: float) -> float:
    """
    ``lambda * (CV(alpha)^2 + CV(beta)^2)`` pooled over every location of
    every gate in ``weights``.

    Raises:
        ArgumentError: If ``weights`` is empty
    """
    if len(weights) == 0:
        raise ArgumentError("no gate weights given", field="weights")
    alpha, beta = _pooled(weights)
    return float(lambda_reg * (_cv_squared(alpha) + _cv_squared(beta)))


def _cv_squared_gradient(values: np.ndarray) -> np.ndarray:
    count = values.size
    mean = values.mean()
    if mean == 0:
        return np.zeros_like(values)
    denominator = mean * mean
    variance = values.var()
    return 2.0 * (values - mean) / (count * denominator) - 2.0 * mean * variance / (count * denominator ** 2)


def regularizer_gradients(
    weights: Sequence[GateWeights], lambda_reg: float
) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Gradient of ``fusion_regularizer`` as one ``(d_alpha, d_beta)`` pair per gate."""
    if len(weights) == 0:
        return []
    alpha, beta = _pooled(weights)
    d_alpha = lambda_reg * _cv_squared_gradient(alpha)
    d_beta = lambda_reg * _cv_squared_gradient(beta)
    result = []
    offset = 0
    for w in weights:
        size = w.alpha.size
        result.append(
            (
                d_alpha[offset:offset + size].reshape(w.spatial),
                d_beta[offset:offset + size].reshape(w.spatial),
            )
        )
        offset += size
    return result


def fuse_gradients(
    h_e: FeatureMap, h_f: FeatureMap, weights: GateWeights, d_out: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Backward of ``fuse``: returns ``(d_h_e, d_h_f, d_alpha, d_beta)``."""
    d_h_e = weights.alpha[None] * d_out
    d_h_f = weights.beta[None] * d_out
    d_alpha = np.sum(d_out * h_e.data, axis=0)
    d_beta = np.sum(d_out * h_f.data, axis=0)
    return d_h_e, d_h_f, d_alpha, d_beta


def gate_gradients(
    weights: GateWeights,
    params: GateParams,
    d_alpha: np.ndarray,
    d_beta: np.ndarray,
) -> GateGradients:
    """
    Backward of ``gate_weights`` through the softmax, the noise scaling and
    the linear projection.

    Args:
        weights: Output of ``gate_weights`` (carries the forward cache)
        params: Parameters used in that forward pass
        d_alpha: Upstream gradient w.r.t. ``alpha``, shape ``(H, W)``
        d_beta: Upstream gradient w.r.t. ``beta``, shape ``(H, W)``

    Raises:
        StateError: If no forward state was recorded
    """
    cache = weights.cache
    if cache is None or cache.logits is None:
        raise StateError("gate_gradients needs the cached forward pass of gate_weights")
    gate = cache.alpha * cache.beta * (d_alpha.ravel() - d_beta.ravel())
    d_logits = np.stack([gate, -gate])
    d_w = cache.shared @ d_logits.T
    d_shared = params.W.astype(d_logits.dtype, copy=False) @ d_logits
    d_sigma = float(np.sum(cache.noise * d_logits)) if cache.noise is not None else 0.0
    return GateGradients(W=d_w, sigma=d_sigma, shared=d_shared)


def save_gate_params(path: Union[str, Path], params: GateParams) -> Path:
    """Persist gate parameters as float64 values plus a JSON sidecar."""
    return save_tensors(
        path,
        kind="gate_params",
        tensors={"W": params.W},
        meta={
            "sigma": float(params.sigma),
            "lambda_reg": float(params.lambda_reg),
            "noise_per_map": bool(params.noise_per_map),
        },
    )


def load_gate_params(path: Union[str, Path]) -> GateParams:
    """
    Load gate parameters written by ``save_gate_params``.

    Raises:
        DataError: If the sidecar or the value file is malformed
    """
    tensors, meta = load_tensors(path, kind="gate_params")
    try:
        return GateParams(
            W=tensors["W"],
            sigma=float(meta["sigma"]),
            lambda_reg=float(meta["lambda_reg"]),
            noise_per_map=bool(meta.get("noise_per_map", False)),
        )
    except KeyError as exc:
        raise DataError("missing gate parameter", path=str(path), field=str(exc.args[0])) from exc
