"""Multi-head scaled dot-product self-attention with a strict causal mask.

Position i attends to positions 0..i only; the mask is additive ``-inf`` on
the upper triangle, so the softmax runs over unmasked keys and outputs at a
position are exactly invariant to any change of later inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from . import tensor as T
from .tensor import Tensor


@dataclass
class AttentionParams:
    """Projection weights of one attention block. Shapes are [d, d] / [d]."""

    wq: Tensor
    bq: Tensor
    wk: Tensor
    bk: Tensor
    wv: Tensor
    bv: Tensor
    wo: Tensor
    bo: Tensor

    def named(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.{k}": v for k, v in self.__dict__.items()}


def init_attention(d_model: int, rng: np.random.Generator) -> AttentionParams:
    bound = 1.0 / math.sqrt(d_model)

    def lin():
        w = Tensor(rng.uniform(-bound, bound, size=(d_model, d_model)), requires_grad=True)
        b = Tensor(rng.uniform(-bound, bound, size=(d_model,)), requires_grad=True)
        return w, b

    wq, bq = lin()
    wk, bk = lin()
    wv, bv = lin()
    wo, bo = lin()
    return AttentionParams(wq, bq, wk, bk, wv, bv, wo, bo)


_MASK_CACHE: dict[int, np.ndarray] = {}


def causal_mask(length: int) -> np.ndarray:
    """Additive [L, L] mask: 0 on and below the diagonal, -inf above."""
    mask = _MASK_CACHE.get(length)
    if mask is None:
        mask = np.triu(np.full((length, length), -np.inf), k=1)
        _MASK_CACHE[length] = mask
    return mask


def causal_self_attention(
    x: Tensor,
    params: AttentionParams,
    n_head: int,
    return_weights: bool = False,
):
    """Apply causal multi-head self-attention to ``x`` of shape [.., L, d].

    Accepts an optional leading batch axis. ``d`` must be divisible by
    ``n_head``. With ``return_weights`` the post-softmax attention weights
    ([.., H, L, L]) are returned as a plain array alongside the output.
    """
    x = T.as_tensor(x)
    d_model = x.shape[-1]
    length = x.shape[-2]
    if d_model % n_head != 0:
        raise ConfigError(f"d_model={d_model} not divisible by n_head={n_head}")
    head_dim = d_model // n_head
    lead = x.shape[:-2]

    def split_heads(t: Tensor) -> Tensor:
        t = T.reshape(t, lead + (length, n_head, head_dim))
        axes = tuple(range(len(lead))) + (len(lead) + 1, len(lead), len(lead) + 2)
        return T.transpose(t, axes)  # [.., H, L, hd]

    q = split_heads(T.add(T.matmul(x, params.wq), params.bq))
    k = split_heads(T.add(T.matmul(x, params.wk), params.bk))
    v = split_heads(T.add(T.matmul(x, params.wv), params.bv))

    kt = T.transpose(k, tuple(range(k.ndim - 2)) + (k.ndim - 1, k.ndim - 2))
    scores = T.scale(T.matmul(q, kt), 1.0 / math.sqrt(head_dim))
    weights = T.softmax_last(scores, mask=causal_mask(length))

    ctx = T.matmul(weights, v)  # [.., H, L, hd]
    axes = tuple(range(len(lead))) + (len(lead) + 1, len(lead), len(lead) + 2)
    ctx = T.reshape(T.transpose(ctx, axes), lead + (length, d_model))
    out = T.add(T.matmul(ctx, params.wo), params.bo)
    if return_weights:
        return out, weights.data
    return out
