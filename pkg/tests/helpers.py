"""Shared builders for micro-scale configs and synthetic interaction rows."""

import numpy as np

from sessionrec.config import (
    Config,
    EncoderConfig,
    FeatureConfig,
    GeneratorConfig,
    ModelConfig,
    TrainConfig,
)
from sessionrec.data import Interaction, UserSequence


def micro_config(variant="v3", heads=None, train_kw=None, **feat_kw):
    feat = dict(d_item=4, d_meta=2, d_short=6, window=100, duration_max=10.0,
                short_encoder="mean", short_heads=2, short_ffn=8)
    feat.update(feat_kw)
    tr = dict(epochs=1, batch_size=4)
    tr.update(train_kw or {})
    cfg = Config(
        data=GeneratorConfig(num_items=12, num_users=8, min_len=3, max_len=6),
        features=FeatureConfig(**feat),
        model=ModelConfig(intent=EncoderConfig(8, 1, 2, 12),
                          item=EncoderConfig(8, 1, 2, 12),
                          d_proj=5, pos_buckets=8, pos_max_delta=86400),
        training=TrainConfig(**tr),
    )
    return cfg.with_variant(variant, tuple(heads) if heads is not None else None)


def rows(n=4, seed=0, num_items=12):
    r = np.random.default_rng(seed)
    ts = np.cumsum(r.integers(5, 60, size=n))
    return [Interaction(item_id=int(r.integers(num_items)), action_type=int(r.integers(11)),
                        genres=tuple(sorted(r.choice(21, size=int(r.integers(1, 4)),
                                                     replace=False).tolist())),
                        movie_show=int(r.integers(2)), tsr=int(r.integers(3)),
                        ts=int(ts[i]), dur=float(r.uniform(1, 9)),
                        ep=float(round(r.uniform(0, 1), 3)))
            for i in range(n)]


def micro_users(count=8, seed=0, min_len=3, max_len=6, num_items=12):
    r = np.random.default_rng(seed)
    out = []
    for u in range(count):
        n = int(r.integers(min_len, max_len + 1))
        out.append(UserSequence(u, rows(n, seed=int(r.integers(1 << 30)),
                                        num_items=num_items)))
    return out
