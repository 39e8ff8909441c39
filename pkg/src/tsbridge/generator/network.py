"""Drift network: path encoder plus pointwise drift head.

The network maps (t, y, history) to an estimated drift in R^d. Time and
state each pass through a small feed-forward block (linear, layer norm,
SiLU, linear). The history is embedded token-wise by a linear layer with
added sinusoidal positional encodings and run through one pre-norm encoder
block (causal self-attention, then a SiLU feed-forward, each with a
residual connection); the causal mask makes position i a function of
tokens 0..i only. The three embeddings are concatenated and mapped back to
R^d by a final feed-forward block whose last linear layer starts at exactly
zero, so a freshly initialized network is the zero drift and the implied
endpoint transport map starts as the identity.

Linear weights and biases are initialized uniformly on
[-1/sqrt(fan_in), +1/sqrt(fan_in)].
"""

from __future__ import annotations

import math

import numpy as np

from ..numerics import attention as A
from ..numerics import tensor as T
from ..numerics.tensor import Tensor


def _linear_init(rng: np.random.Generator, fan_in: int, fan_out: int):
    bound = 1.0 / math.sqrt(fan_in)
    w = Tensor(rng.uniform(-bound, bound, size=(fan_in, fan_out)), requires_grad=True)
    b = Tensor(rng.uniform(-bound, bound, size=(fan_out,)), requires_grad=True)
    return w, b


def _ln_init(dim: int):
    return (
        Tensor(np.ones(dim), requires_grad=True),
        Tensor(np.zeros(dim), requires_grad=True),
    )


_PE_CACHE: dict[tuple[int, int], np.ndarray] = {}


def positional_encoding(length: int, d_model: int) -> np.ndarray:
    """Sinusoidal position table [length, d_model]."""
    key = (length, d_model)
    pe = _PE_CACHE.get(key)
    if pe is None:
        pos = np.arange(length)[:, None]
        idx = np.arange(d_model)[None, :]
        angles = pos / np.power(10000.0, (2 * (idx // 2)) / d_model)
        pe = np.where(idx % 2 == 0, np.sin(angles), np.cos(angles))
        _PE_CACHE[key] = pe
    return pe


class DriftNet:
    """Parameter container and forward passes of the drift network."""

    def __init__(self, dim: int, d_model: int, n_head: int, ffn_ratio: int,
                 rng: np.random.Generator, zero_head: bool = True):
        self.dim = dim
        self.d_model = d_model
        self.n_head = n_head
        self.ffn_ratio = ffn_ratio
        p: dict[str, Tensor] = {}

        p["time.w1"], p["time.b1"] = _linear_init(rng, 1, d_model)
        p["time.ln_g"], p["time.ln_b"] = _ln_init(d_model)
        p["time.w2"], p["time.b2"] = _linear_init(rng, d_model, d_model)

        p["state.w1"], p["state.b1"] = _linear_init(rng, dim, d_model)
        p["state.ln_g"], p["state.ln_b"] = _ln_init(d_model)
        p["state.w2"], p["state.b2"] = _linear_init(rng, d_model, d_model)

        p["enc.embed.w"], p["enc.embed.b"] = _linear_init(rng, dim, d_model)
        self.attn = A.init_attention(d_model, rng)
        p.update(self.attn.named("enc.attn"))
        p["enc.ln1_g"], p["enc.ln1_b"] = _ln_init(d_model)
        p["enc.ln2_g"], p["enc.ln2_b"] = _ln_init(d_model)
        hidden = ffn_ratio * d_model
        p["enc.ffn.w1"], p["enc.ffn.b1"] = _linear_init(rng, d_model, hidden)
        p["enc.ffn.w2"], p["enc.ffn.b2"] = _linear_init(rng, hidden, d_model)

        p["head.w1"], p["head.b1"] = _linear_init(rng, 3 * d_model, d_model)
        p["head.ln_g"], p["head.ln_b"] = _ln_init(d_model)
        p["head.w2"], p["head.b2"] = _linear_init(rng, d_model, dim)
        if zero_head:
            p["head.w2"].data[:] = 0.0
            p["head.b2"].data[:] = 0.0

        self.params = p

    # ------------------------------------------------------------------
    def _ffn_block(self, x: Tensor, prefix: str) -> Tensor:
        h = T.add(T.matmul(x, self.params[f"{prefix}.w1"]), self.params[f"{prefix}.b1"])
        h = T.layer_norm(h, self.params[f"{prefix}.ln_g"], self.params[f"{prefix}.ln_b"])
        h = T.silu(h)
        return T.add(T.matmul(h, self.params[f"{prefix}.w2"]), self.params[f"{prefix}.b2"])

    def embed_time(self, t) -> Tensor:
        return self._ffn_block(T.as_tensor(t), "time")

    def embed_state(self, y) -> Tensor:
        return self._ffn_block(T.as_tensor(y), "state")

    def encode(self, history) -> Tensor:
        """Contexts at every position: [.., L, d] -> [.., L, d_model]."""
        history = T.as_tensor(history)
        length = history.shape[-2]
        x = T.add(T.matmul(history, self.params["enc.embed.w"]), self.params["enc.embed.b"])
        x = T.add(x, Tensor(positional_encoding(length, self.d_model)))
        normed = T.layer_norm(x, self.params["enc.ln1_g"], self.params["enc.ln1_b"])
        x = T.add(x, A.causal_self_attention(normed, self.attn, self.n_head))
        normed = T.layer_norm(x, self.params["enc.ln2_g"], self.params["enc.ln2_b"])
        h = T.silu(T.add(T.matmul(normed, self.params["enc.ffn.w1"]), self.params["enc.ffn.b1"]))
        ff = T.add(T.matmul(h, self.params["enc.ffn.w2"]), self.params["enc.ffn.b2"])
        return T.add(x, ff)

    def context(self, history) -> Tensor:
        """Context of the full history: representation at the last position."""
        out = self.encode(history)
        return Tensor(out.data[..., -1, :]) if not out.requires_grad else _take_last(out)

    def drift(self, t, y, context) -> Tensor:
        """Estimated drift s(t, y, c); shapes broadcast on leading axes."""
        y = T.as_tensor(y)
        t_arr = np.asarray(T.as_tensor(t).data, dtype=np.float64)
        if t_arr.ndim < y.ndim:
            t_arr = np.broadcast_to(t_arr, y.shape[:-1] + (1,)).copy()
        emb = T.concat([self.embed_time(Tensor(t_arr)), self.embed_state(y), T.as_tensor(context)], axis=-1)
        return self._ffn_block(emb, "head")

    # ------------------------------------------------------------------
    def clone(self) -> "DriftNet":
        """Frozen deep copy: same values, no gradient tracking."""
        rng = np.random.default_rng(0)
        other = DriftNet(self.dim, self.d_model, self.n_head, self.ffn_ratio, rng,
                         zero_head=False)
        for name, tensor in self.params.items():
            other.params[name].data = tensor.data.copy()
            other.params[name].requires_grad = False
        return other

    def zero_grad(self):
        for tensor in self.params.values():
            tensor.zero_grad()

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: tensor.data.copy() for name, tensor in self.params.items()}

    def load_state_arrays(self, arrays: dict[str, np.ndarray]):
        for name, tensor in self.params.items():
            tensor.data = np.asarray(arrays[name], dtype=np.float64).reshape(tensor.shape).copy()


def _take_last(out: Tensor) -> Tensor:
    """Differentiable slice of the last sequence position."""

    def backward(g):
        full = np.zeros_like(out.data)
        full[..., -1, :] = g
        T._accumulate(out, full)

    return T._node(out.data[..., -1, :].copy(), (out,), backward)
