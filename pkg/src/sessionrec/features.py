"""Feature construction: per-interaction feature rows, trailing-window
selection, short-term interest encoding, and the model input sequence.

Each interaction becomes one dense row: item embedding, four categorical
metadata embeddings (action, mean-pooled genres, movie/show, release-age
bucket), and two normalized scalars (duration, episode position). The
short-term row k summarizes the interactions inside a trailing time window
ending at k, so row k never sees anything after position k.
"""

from __future__ import annotations

from bisect import bisect_left
from dataclasses import dataclass

import numpy as np

from .config import (
    FeatureConfig,
    NUM_ACTION_TYPES,
    NUM_GENRES,
    NUM_MOVIE_SHOW,
    NUM_TSR,
)
from .data import Interaction
from .nn import INIT_STD, EncoderLayer, LayerNorm, Linear
from . import tensor as T
from .tensor import Tensor


class InteractionFeaturizer:
    """Embedding tables plus the per-interaction feature assembly."""

    def __init__(self, num_items: int, cfg: FeatureConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.num_items = num_items
        d_i, d_m = cfg.d_item, cfg.d_meta
        self.item_table = T.param(rng.normal(0.0, INIT_STD, (num_items, d_i)), name="embed.item")
        self.action_table = T.param(rng.normal(0.0, INIT_STD, (NUM_ACTION_TYPES, d_m)),
                                    name="embed.action")
        self.genre_table = T.param(rng.normal(0.0, INIT_STD, (NUM_GENRES, d_m)),
                                   name="embed.genre")
        self.ms_table = T.param(rng.normal(0.0, INIT_STD, (NUM_MOVIE_SHOW, d_m)),
                                name="embed.movie_show")
        self.tsr_table = T.param(rng.normal(0.0, INIT_STD, (NUM_TSR, d_m)), name="embed.tsr")

    def build(self, interactions: list[Interaction]) -> Tensor:
        """Feature matrix of shape (n, d_full) for one user's interactions."""
        items = np.array([r.item_id for r in interactions])
        actions = np.array([r.action_type for r in interactions])
        ms = np.array([r.movie_show for r in interactions])
        tsr = np.array([r.tsr for r in interactions])
        dur = np.array([r.dur for r in interactions]) / self.cfg.duration_max
        ep = np.array([r.ep for r in interactions])
        numerics = np.stack([np.clip(dur, 0.0, 1.0), np.clip(ep, 0.0, 1.0)], axis=1)
        return T.concat_cols([
            T.embedding_rows(self.item_table, items),
            T.embedding_rows(self.action_table, actions),
            T.pool_rows(self.genre_table, [r.genres for r in interactions]),
            T.embedding_rows(self.ms_table, ms),
            T.embedding_rows(self.tsr_table, tsr),
            T.constant(numerics),
        ])

    def params(self) -> list[Tensor]:
        return [self.item_table, self.action_table, self.genre_table,
                self.ms_table, self.tsr_table]


def window_start(timestamps, k: int, horizon: int) -> int:
    """Smallest index i <= k with timestamps[k] - timestamps[i] <= horizon.

    Binary search over the strictly increasing prefix; k itself always
    qualifies, so the result is well defined even for horizon 0.
    """
    return bisect_left(timestamps, timestamps[k] - horizon, 0, k + 1)


def window_starts(timestamps, horizon: int) -> np.ndarray:
    return np.array([window_start(timestamps, k, horizon) for k in range(len(timestamps))],
                    dtype=np.int64)


class ShortTermEncoder:
    """Summarizes the trailing window before each position into d_short dims.

    Two modes. 'transformer' reduces rows to d_short, runs one bidirectional
    encoder layer over each window slice, mean-pools it, and applies a final
    projection. 'mean' pools raw feature rows over the window with a fixed
    averaging matrix and projects; one matmul for the whole sequence, which
    is what the desk-scale profile uses.
    """

    def __init__(self, d_full: int, cfg: FeatureConfig, rng: np.random.Generator,
                 name: str = "short"):
        self.cfg = cfg
        self.mode = cfg.short_encoder
        if self.mode == "transformer":
            self.reduce = Linear(d_full, cfg.d_short, rng, f"{name}.reduce")
            self.reduce_norm = LayerNorm(cfg.d_short, f"{name}.reduce_norm")
            self.layer = EncoderLayer(cfg.d_short, cfg.short_heads, cfg.short_ffn,
                                      rng, f"{name}.layer0")
            self.project = Linear(cfg.d_short, cfg.d_short, rng, f"{name}.project")
        else:
            self.project = Linear(d_full, cfg.d_short, rng, f"{name}.project")

    def __call__(self, F: Tensor, timestamps) -> Tensor:
        starts = window_starts(timestamps, self.cfg.window)
        n = F.shape[0]
        if self.mode == "transformer":
            reduced = self.reduce_norm(self.reduce(F))
            pooled = []
            for k in range(n):
                win = reduced.slice_rows(int(starts[k]), k + 1)
                pooled.append(self.layer(win, causal=False).mean(axis=0))
            return self.project(T.stack_rows(pooled))
        avg = np.zeros((n, n))
        for k in range(n):
            avg[k, starts[k]:k + 1] = 1.0 / (k + 1 - starts[k])
        return self.project(T.constant(avg).matmul(F))

    def params(self) -> list[Tensor]:
        if self.mode == "transformer":
            return (self.reduce.params() + self.reduce_norm.params()
                    + self.layer.params() + self.project.params())
        return self.project.params()


@dataclass
class InputSeq:
    """Model input for one user: feature rows, optional short-term rows,
    their concatenation, and the timestamps driving positional encoding."""
    F: Tensor
    S: Tensor | None
    X: Tensor
    timestamps: np.ndarray

    @property
    def n(self) -> int:
        return self.F.shape[0]


def build_input_sequence(interactions: list[Interaction],
                         featurizer: InteractionFeaturizer,
                         short_encoder: ShortTermEncoder | None,
                         max_seq: int | None = None) -> InputSeq:
    if max_seq is not None:
        interactions = interactions[-max_seq:]
    ts = np.array([r.ts for r in interactions], dtype=np.int64)
    F = featurizer.build(interactions)
    if short_encoder is None:
        return InputSeq(F=F, S=None, X=F, timestamps=ts)
    S = short_encoder(F, ts)
    return InputSeq(F=F, S=S, X=T.concat_cols([F, S]), timestamps=ts)
