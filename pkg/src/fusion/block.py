"""
Per-scale fusion block wiring two event branches and one frame branch.

Gated mode::

    h_F'  = P h_F
    g_a   = gate(concat(h_E^a, h_F))      g_b = gate(concat(h_E^b, h_F))
    h     = fuse(h_E^a, h_F', g_a) + fuse(h_E^b, h_F', g_b)

``add`` and ``concat`` are the static baselines (``h_E^x + h_F'`` and
``Q [h_E^x; h_F']`` per branch). In event-only mode the frame branch is
never touched.

Parameters live in the detector's flat parameter dict under a per-scale
prefix: ``gate_w``, ``sigma``, ``proj`` and, for ``concat``, ``mix``.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..core.exceptions import ArgumentError
from .gate import (
    FeatureMap,
    GateParams,
    GateWeights,
    combine_frequencies,
    concat_features,
    fuse,
    fuse_gradients,
    gate_gradients,
    gate_weights,
)


class FusionMode(str, Enum):
    GATED = "gated"
    ADD = "add"
    CONCAT = "concat"


def init_block_params(prefix: str, channels: int, mode: FusionMode, sigma: float, dtype) -> Dict[str, np.ndarray]:
    """Gate at zero (equal weights), identity projection, ``[I | I]`` mixer."""
    params = {
        f"{prefix}.gate_w": np.zeros((2 * channels, 2), dtype=dtype),
        f"{prefix}.sigma": np.array([sigma], dtype=dtype),
        f"{prefix}.proj": np.eye(channels, dtype=dtype),
    }
    if mode == FusionMode.CONCAT:
        params[f"{prefix}.mix"] = np.concatenate([np.eye(channels), np.eye(channels)], axis=1).astype(dtype)
    return params


def block_gate_params(params: Dict[str, np.ndarray], prefix: str, lambda_reg: float,
                      noise_per_map: bool) -> GateParams:
    return GateParams(
        W=params[f"{prefix}.gate_w"],
        sigma=max(float(params[f"{prefix}.sigma"][0]), 0.0),
        lambda_reg=lambda_reg,
        noise_per_map=noise_per_map,
    )


@dataclass(eq=False)
class BlockCache:
    mode: FusionMode
    event_only: bool
    h_a: FeatureMap
    h_b: FeatureMap
    h_f: Optional[FeatureMap] = None
    h_f_proj: Optional[FeatureMap] = None
    weights: Tuple[GateWeights, ...] = ()
    gate: Optional[GateParams] = None


def block_forward(
    params: Dict[str, np.ndarray],
    prefix: str,
    h_a: FeatureMap,
    h_b: FeatureMap,
    h_f: Optional[FeatureMap],
    mode: FusionMode,
    event_only: bool,
    training: bool,
    rng: Optional[np.random.Generator],
    lambda_reg: float = 0.01,
    noise_per_map: bool = False,
) -> Tuple[FeatureMap, BlockCache]:
    """
    Fuse one scale.

    Returns:
        The fused map and the cache for ``block_backward``
    """
    if h_a.data.shape != h_b.data.shape:
        raise ArgumentError("frequency branches differ in shape", field="h_b")
    channels = h_a.channels
    if event_only:
        cache = BlockCache(mode=mode, event_only=True, h_a=h_a, h_b=h_b)
        summed = h_a.data + h_b.data
        if mode == FusionMode.CONCAT:
            mix = params[f"{prefix}.mix"][:, :channels]
            summed = (mix @ summed.reshape(channels, -1)).reshape(summed.shape)
        return FeatureMap(summed), cache
    if h_f is None:
        raise ArgumentError("fused mode needs frame features", field="h_f")

    h_f_proj = FeatureMap.from_flat(params[f"{prefix}.proj"] @ h_f.flat(), h_f.spatial)
    cache = BlockCache(mode=mode, event_only=False, h_a=h_a, h_b=h_b, h_f=h_f, h_f_proj=h_f_proj)

    if mode == FusionMode.GATED:
        gate = block_gate_params(params, prefix, lambda_reg, noise_per_map)
        weights_a = gate_weights(concat_features(h_a, h_f), gate, training, rng)
        weights_b = gate_weights(concat_features(h_b, h_f), gate, training, rng)
        cache.weights = (weights_a, weights_b)
        cache.gate = gate
        out = combine_frequencies(fuse(h_a, h_f_proj, weights_a), fuse(h_b, h_f_proj, weights_b))
    elif mode == FusionMode.ADD:
        out = combine_frequencies(
            FeatureMap(h_a.data + h_f_proj.data), FeatureMap(h_b.data + h_f_proj.data)
        )
    else:
        mix = params[f"{prefix}.mix"]
        branches = [
            FeatureMap.from_flat(mix @ np.concatenate([h.flat(), h_f_proj.flat()]), h.spatial)
            for h in (h_a, h_b)
        ]
        out = combine_frequencies(*branches)
    return out, cache


def block_backward(
    params: Dict[str, np.ndarray],
    prefix: str,
    cache: BlockCache,
    d_out: np.ndarray,
    reg_grads: Optional[List[Tuple[np.ndarray, np.ndarray]]] = None,
) -> Tuple[Dict[str, np.ndarray], np.ndarray, np.ndarray, Optional[np.ndarray]]:
    """
    Backward of ``block_forward``.

    Args:
        d_out: Gradient w.r.t. the fused map, shape ``(C, H, W)``
        reg_grads: Regulariser gradients ``(d_alpha, d_beta)`` for the two
            gates of this block (gated mode only)

    Returns:
        ``(param_grads, d_h_a, d_h_b, d_h_f)``; ``d_h_f`` is ``None`` in
        event-only mode
    """
    channels = cache.h_a.channels
    spatial = cache.h_a.spatial
    grads: Dict[str, np.ndarray] = {}
    d_flat = d_out.reshape(channels, -1)

    if cache.event_only:
        if cache.mode == FusionMode.CONCAT:
            mix = params[f"{prefix}.mix"]
            summed = (cache.h_a.data + cache.h_b.data).reshape(channels, -1)
            d_mix = np.zeros_like(mix)
            d_mix[:, :channels] = d_flat @ summed.T
            grads[f"{prefix}.mix"] = d_mix
            d_in = (mix[:, :channels].T @ d_flat).reshape(d_out.shape)
            return grads, d_in, d_in.copy(), None
        return grads, d_out.copy(), d_out.copy(), None

    proj = params[f"{prefix}.proj"]
    h_f_flat = cache.h_f.flat()
    d_h_f = np.zeros_like(cache.h_f.data)

    if cache.mode == FusionMode.GATED:
        gate = cache.gate
        d_gate_w = np.zeros_like(params[f"{prefix}.gate_w"])
        d_sigma = 0.0
        d_h_f_proj = np.zeros_like(d_out)
        d_branches = []
        for index, h_e in enumerate((cache.h_a, cache.h_b)):
            weights = cache.weights[index]
            d_h_e, d_proj_part, d_alpha, d_beta = fuse_gradients(h_e, cache.h_f_proj, weights, d_out)
            if reg_grads is not None:
                d_alpha = d_alpha + reg_grads[index][0]
                d_beta = d_beta + reg_grads[index][1]
            gate_grads = gate_gradients(weights, gate, d_alpha, d_beta)
            d_gate_w += gate_grads.W
            d_sigma += gate_grads.sigma
            d_shared = gate_grads.shared.reshape(2 * channels, *spatial)
            d_branches.append(d_h_e + d_shared[:channels])
            d_h_f += d_shared[channels:]
            d_h_f_proj += d_proj_part
        grads[f"{prefix}.gate_w"] = d_gate_w
        grads[f"{prefix}.sigma"] = np.array([d_sigma], dtype=params[f"{prefix}.sigma"].dtype)
        d_a, d_b = d_branches
    elif cache.mode == FusionMode.ADD:
        d_a, d_b = d_out.copy(), d_out.copy()
        d_h_f_proj = 2.0 * d_out
    else:
        mix = params[f"{prefix}.mix"]
        stacked_sum = np.concatenate(
            [cache.h_a.flat() + cache.h_b.flat(), 2.0 * cache.h_f_proj.flat()]
        )
        grads[f"{prefix}.mix"] = d_flat @ stacked_sum.T
        d_event = (mix[:, :channels].T @ d_flat).reshape(d_out.shape)
        d_a, d_b = d_event, d_event.copy()
        d_h_f_proj = 2.0 * (mix[:, channels:].T @ d_flat).reshape(d_out.shape)

    d_proj_flat = d_h_f_proj.reshape(channels, -1)
    grads[f"{prefix}.proj"] = d_proj_flat @ h_f_flat.T
    d_h_f += (proj.T @ d_proj_flat).reshape(d_h_f.shape)
    if f"{prefix}.sigma" not in grads:
        grads[f"{prefix}.sigma"] = np.zeros_like(params[f"{prefix}.sigma"])
    if f"{prefix}.gate_w" not in grads:
        grads[f"{prefix}.gate_w"] = np.zeros_like(params[f"{prefix}.gate_w"])
    return grads, d_a, d_b, d_h_f
