"""Minimal float64 tensor core: reverse-mode autodiff, attention, Adam."""

from .attention import AttentionParams, causal_mask, causal_self_attention, init_attention
from .optim import AdamState, adam_step
from .tensor import (
    LAYER_NORM_EPS,
    Tensor,
    add,
    as_tensor,
    backward,
    concat,
    grad_enabled,
    layer_norm,
    matmul,
    mul,
    no_grad,
    reshape,
    scale,
    silu,
    softmax_last,
    square,
    sub,
    tmean,
    transpose,
    tsum,
)

__all__ = [
    "AdamState",
    "AttentionParams",
    "LAYER_NORM_EPS",
    "Tensor",
    "adam_step",
    "add",
    "as_tensor",
    "backward",
    "causal_mask",
    "causal_self_attention",
    "concat",
    "grad_enabled",
    "init_attention",
    "layer_norm",
    "matmul",
    "mul",
    "no_grad",
    "reshape",
    "scale",
    "silu",
    "softmax_last",
    "square",
    "sub",
    "tmean",
    "transpose",
    "tsum",
]
