"""Neural building blocks on top of the tensor engine.

Everything here is a plain object holding named parameter tensors and a
__call__ that assembles the forward graph. Modules expose params() so the
model can collect a flat, uniquely named parameter list for the optimizer
and for checkpoints.
"""

from __future__ import annotations

import math

import numpy as np

from .config import EncoderConfig
from .errors import ShapeError
from . import tensor as T
from .tensor import Tensor

INIT_STD = 0.02


class Linear:
    """Affine map x @ W + b with weights drawn from N(0, 0.02^2)."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, name: str):
        self.W = T.param(rng.normal(0.0, INIT_STD, size=(d_in, d_out)), name=f"{name}.W")
        self.b = T.param(np.zeros(d_out), name=f"{name}.b")

    def __call__(self, x: Tensor) -> Tensor:
        return x.matmul(self.W) + self.b

    def params(self) -> list[Tensor]:
        return [self.W, self.b]


class LayerNorm:
    def __init__(self, d: int, name: str):
        self.gain = T.param(np.ones(d), name=f"{name}.gain")
        self.bias = T.param(np.zeros(d), name=f"{name}.bias")

    def __call__(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.gain, self.bias)

    def params(self) -> list[Tensor]:
        return [self.gain, self.bias]


class MultiHeadAttention:
    """Self-attention with column-sliced heads and an output projection."""

    def __init__(self, d_model: int, n_heads: int, rng: np.random.Generator, name: str):
        if d_model % n_heads != 0:
            raise ShapeError(f"{name}: d_model {d_model} not divisible by {n_heads} heads")
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.wq = Linear(d_model, d_model, rng, f"{name}.q")
        self.wk = Linear(d_model, d_model, rng, f"{name}.k")
        self.wv = Linear(d_model, d_model, rng, f"{name}.v")
        self.wo = Linear(d_model, d_model, rng, f"{name}.out")

    def __call__(self, x: Tensor, causal: bool) -> Tensor:
        q, k, v = self.wq(x), self.wk(x), self.wv(x)
        outs = []
        for h in range(self.n_heads):
            lo, hi = h * self.d_head, (h + 1) * self.d_head
            outs.append(T.scaled_dot_attention(
                q.slice_cols(lo, hi), k.slice_cols(lo, hi), v.slice_cols(lo, hi),
                causal=causal))
        return self.wo(T.concat_cols(outs))

    def params(self) -> list[Tensor]:
        return self.wq.params() + self.wk.params() + self.wv.params() + self.wo.params()


class FeedForward:
    def __init__(self, d_model: int, d_ffn: int, rng: np.random.Generator, name: str):
        self.up = Linear(d_model, d_ffn, rng, f"{name}.up")
        self.down = Linear(d_ffn, d_model, rng, f"{name}.down")

    def __call__(self, x: Tensor) -> Tensor:
        return self.down(self.up(x).relu())

    def params(self) -> list[Tensor]:
        return self.up.params() + self.down.params()


class EncoderLayer:
    """Post-norm transformer block: norm(x + attn(x)), then norm(h + ffn(h))."""

    def __init__(self, d_model: int, n_heads: int, d_ffn: int,
                 rng: np.random.Generator, name: str):
        self.attn = MultiHeadAttention(d_model, n_heads, rng, f"{name}.attn")
        self.norm1 = LayerNorm(d_model, f"{name}.norm1")
        self.ffn = FeedForward(d_model, d_ffn, rng, f"{name}.ffn")
        self.norm2 = LayerNorm(d_model, f"{name}.norm2")

    def __call__(self, x: Tensor, causal: bool) -> Tensor:
        h = self.norm1(x + self.attn(x, causal))
        return self.norm2(h + self.ffn(h))

    def params(self) -> list[Tensor]:
        return (self.attn.params() + self.norm1.params()
                + self.ffn.params() + self.norm2.params())


def time_buckets(timestamps: np.ndarray, n_buckets: int, max_delta: int) -> np.ndarray:
    """Log-spaced bucket index for each timestamp's delta from the first one.

    Delta 0 (and anything under a second) is bucket 0; one second starts
    bucket 1; deltas at or past max_delta clip into the last bucket.
    """
    ts = np.asarray(timestamps, dtype=np.float64)
    deltas = ts - ts[0]
    out = np.zeros(len(ts), dtype=np.int64)
    big = deltas >= 1.0
    if big.any():
        frac = np.log(deltas[big]) / math.log(max(max_delta, 2))
        out[big] = 1 + np.floor((n_buckets - 2) * np.minimum(frac, 1.0)).astype(np.int64)
    return np.clip(out, 0, n_buckets - 1)


class TransformerEncoder:
    """FC reduction + layer norm, additive trainable positional table indexed
    by time-delta bucket, then a stack of causal encoder layers.
    """

    def __init__(self, d_in: int, cfg: EncoderConfig, pos_buckets: int,
                 pos_max_delta: int, rng: np.random.Generator, name: str):
        self.pos_buckets = pos_buckets
        self.pos_max_delta = pos_max_delta
        self.reduce = Linear(d_in, cfg.d_model, rng, f"{name}.reduce")
        self.reduce_norm = LayerNorm(cfg.d_model, f"{name}.reduce_norm")
        self.pos_table = T.param(rng.normal(0.0, INIT_STD, size=(pos_buckets, cfg.d_model)),
                                 name=f"{name}.pos_table")
        self.layers = [EncoderLayer(cfg.d_model, cfg.heads, cfg.d_ffn, rng, f"{name}.layer{i}")
                       for i in range(cfg.layers)]

    def __call__(self, x: Tensor, timestamps: np.ndarray, causal: bool = True) -> Tensor:
        h = self.reduce_norm(self.reduce(x))
        buckets = time_buckets(timestamps, self.pos_buckets, self.pos_max_delta)
        h = h + T.embedding_rows(self.pos_table, buckets)
        for layer in self.layers:
            h = layer(h, causal)
        return h

    def params(self) -> list[Tensor]:
        out = self.reduce.params() + self.reduce_norm.params() + [self.pos_table]
        for layer in self.layers:
            out += layer.params()
        return out
