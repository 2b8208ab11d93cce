"""
Gated event/frame feature fusion with analytic gradients.
"""

from .block import BlockCache, FusionMode, block_backward, block_forward, init_block_params
from .gate import (
    FeatureMap,
    GateGradients,
    GateParams,
    GateWeights,
    combine_frequencies,
    concat_features,
    fuse,
    fuse_gradients,
    fusion_regularizer,
    gate_gradients,
    gate_weights,
    load_gate_params,
    regularizer_gradients,
    save_gate_params,
)

__all__ = [
    "BlockCache",
    "FeatureMap",
    "FusionMode",
    "GateGradients",
    "GateParams",
    "GateWeights",
    "block_backward",
    "block_forward",
    "combine_frequencies",
    "concat_features",
    "fuse",
    "fuse_gradients",
    "fusion_regularizer",
    "gate_gradients",
    "gate_weights",
    "init_block_params",
    "load_gate_params",
    "regularizer_gradients",
    "save_gate_params",
]
