"""Feature construction: per-interaction rows, window selection, short-term
encoding, and causality of the assembled input sequence."""

import numpy as np
import pytest

from sessionrec.config import FeatureConfig
from sessionrec.data import Interaction
from sessionrec.features import (
    InteractionFeaturizer,
    ShortTermEncoder,
    build_input_sequence,
    window_start,
    window_starts,
)
from sessionrec.tensor import grad_check, param


def micro_cfg(**kw):
    base = dict(d_item=4, d_meta=2, d_short=6, window=100, duration_max=10.0,
                short_encoder="transformer", short_heads=2, short_ffn=8)
    base.update(kw)
    return FeatureConfig(**base)


def row(ts, item_id=0, action=1, genres=(2,), ms=0, tsr=0, dur=5.0, ep=0.0):
    return Interaction(item_id=item_id, action_type=action, genres=tuple(genres),
                       movie_show=ms, tsr=tsr, ts=ts, dur=dur, ep=ep)


def rng():
    return np.random.default_rng(0)


# ---------------------------------------------------------------------------
# per-interaction features

def test_d_full_bookkeeping():
    cfg = micro_cfg()
    assert cfg.d_full == 4 + 4 * 2 + 2 == 14
    feat = InteractionFeaturizer(10, cfg, rng())
    F = feat.build([row(0), row(50)])
    assert F.shape == (2, 14)


@pytest.mark.parametrize("d_item,d_meta", [(3, 1), (8, 4), (5, 7)])
def test_d_full_matches_realized_width(d_item, d_meta):
    cfg = micro_cfg(d_item=d_item, d_meta=d_meta)
    feat = InteractionFeaturizer(6, cfg, rng())
    F = feat.build([row(0), row(10)])
    assert F.shape[1] == cfg.d_full == d_item + 4 * d_meta + 2


def test_paper_scale_dims_reachable():
    cfg = FeatureConfig(d_item=401, d_meta=30, d_short=200)
    assert cfg.d_full == 523
    assert cfg.d_full + cfg.d_short == 723


def test_single_genre_slot_is_that_embedding_row():
    cfg = micro_cfg()
    feat = InteractionFeaturizer(10, cfg, rng())
    F = feat.build([row(0, genres=(7,))])
    lo = cfg.d_item + cfg.d_meta
    assert np.allclose(F.data[0, lo:lo + cfg.d_meta], feat.genre_table.data[7], atol=0)


def test_multi_genre_slot_is_mean_of_rows():
    cfg = micro_cfg()
    feat = InteractionFeaturizer(10, cfg, rng())
    F = feat.build([row(0, genres=(3, 9, 11))])
    lo = cfg.d_item + cfg.d_meta
    expect = feat.genre_table.data[[3, 9, 11]].mean(axis=0)
    assert np.allclose(F.data[0, lo:lo + cfg.d_meta], expect)


def test_numeric_normalization_and_clipping():
    cfg = micro_cfg(duration_max=10.0)
    feat = InteractionFeaturizer(10, cfg, rng())
    F = feat.build([row(0, dur=5.0, ep=0.25), row(10, dur=125.0, ep=1.0)])
    assert np.allclose(F.data[0, -2:], [0.5, 0.25])
    assert F.data[1, -2] == 1.0  # duration above the bound clips
    assert F.data[1, -1] == 1.0


def test_out_of_range_item_raises():
    feat = InteractionFeaturizer(4, micro_cfg(), rng())
    with pytest.raises(IndexError):
        feat.build([row(0, item_id=4)])


# ---------------------------------------------------------------------------
# window selection

def test_window_hand_case():
    ts = [10, 50, 100, 105]
    assert window_start(ts, 3, 10) == 2  # only the last two are within 10s
    assert window_start(ts, 3, 0) == 3
    assert window_start(ts, 3, 94) == 1
    assert window_start(ts, 3, 1000) == 0


def test_window_h_zero_is_self():
    ts = [5, 6, 100]
    for k in range(3):
        assert window_start(ts, k, 0) == k


def test_window_matches_linear_scan_oracle():
    """Binary search equals brute force on 1000 random increasing vectors."""
    r = np.random.default_rng(123)
    for _ in range(1000):
        n = int(r.integers(1, 40))
        ts = np.cumsum(r.integers(1, 1000, size=n)).tolist()
        h = int(r.integers(0, 2000))
        k = int(r.integers(0, n))
        scan = next(i for i in range(k + 1) if ts[k] - ts[i] <= h)
        assert window_start(ts, k, h) == scan


# ---------------------------------------------------------------------------
# short-term encoding

@pytest.mark.parametrize("mode", ["transformer", "mean"])
def test_short_term_ignores_outside_window(mode):
    cfg = micro_cfg(short_encoder=mode, window=100)
    feat = InteractionFeaturizer(10, cfg, rng())
    enc = ShortTermEncoder(cfg.d_full, cfg, np.random.default_rng(1))
    base = [row(0, item_id=1), row(1_000_000, item_id=2), row(1_000_010, item_id=3)]
    changed = [row(0, item_id=9, action=4, genres=(5, 6)), base[1], base[2]]
    s_base = enc(feat.build(base), [r.ts for r in base]).data
    s_changed = enc(feat.build(changed), [r.ts for r in changed]).data
    assert np.max(np.abs(s_base[1] - s_changed[1])) < 1e-12
    assert np.max(np.abs(s_base[2] - s_changed[2])) < 1e-12
    assert np.max(np.abs(s_base[0] - s_changed[0])) > 1e-6


@pytest.mark.parametrize("mode", ["transformer", "mean"])
def test_short_term_shape_and_determinism(mode):
    cfg = micro_cfg(short_encoder=mode)
    feat = InteractionFeaturizer(10, cfg, rng())
    enc = ShortTermEncoder(cfg.d_full, cfg, np.random.default_rng(1))
    rows = [row(t * 10, item_id=t % 3) for t in range(5)]
    a = enc(feat.build(rows), [r.ts for r in rows]).data
    b = enc(feat.build(rows), [r.ts for r in rows]).data
    assert a.shape == (5, cfg.d_short)
    assert np.array_equal(a, b)


def test_short_term_gradient_matches_finite_differences():
    cfg = micro_cfg(short_encoder="transformer", window=50)
    enc = ShortTermEncoder(8, cfg, np.random.default_rng(2))
    F = param(np.random.default_rng(3).normal(size=(4, 8)))
    ts = [0, 10, 100, 130]
    params = [F] + enc.params()
    err = grad_check(lambda: (enc(F, ts) * enc(F, ts)).sum(), params)
    assert err < 1e-4


def test_mean_mode_single_window_equals_projected_row():
    cfg = micro_cfg(short_encoder="mean", window=0)
    feat = InteractionFeaturizer(10, cfg, rng())
    enc = ShortTermEncoder(cfg.d_full, cfg, np.random.default_rng(1))
    rows = [row(0), row(10, item_id=2), row(30, item_id=5)]
    F = feat.build(rows)
    S = enc(F, [r.ts for r in rows]).data
    expect = F.data @ enc.project.W.data + enc.project.b.data
    assert np.allclose(S, expect)  # window 0 pools each row alone


# ---------------------------------------------------------------------------
# assembled input sequence

@pytest.mark.parametrize("mode", ["transformer", "mean"])
def test_input_sequence_shapes(mode):
    cfg = micro_cfg(short_encoder=mode)
    feat = InteractionFeaturizer(10, cfg, rng())
    enc = ShortTermEncoder(cfg.d_full, cfg, np.random.default_rng(1))
    seq = build_input_sequence([row(0), row(10)], feat, enc)
    assert seq.n == 2
    assert seq.X.shape == (2, cfg.d_full + cfg.d_short)
    bare = build_input_sequence([row(0), row(10)], feat, None)
    assert bare.S is None and bare.X.shape == (2, cfg.d_full)


@pytest.mark.parametrize("mode", ["transformer", "mean"])
def test_input_sequence_causality(mode):
    """Perturbing interaction k+1 leaves row k of the concat unchanged."""
    cfg = micro_cfg(short_encoder=mode, window=40)
    feat = InteractionFeaturizer(10, cfg, rng())
    enc = ShortTermEncoder(cfg.d_full, cfg, np.random.default_rng(1))
    base = [row(t * 10, item_id=t % 3, dur=3.0 + t) for t in range(6)]
    x_base = build_input_sequence(base, feat, enc).X.data
    for k in range(5):
        mutated = list(base)
        mutated[k + 1] = row(base[k + 1].ts, item_id=9, action=5, genres=(1, 2), dur=9.0)
        x_mut = build_input_sequence(mutated, feat, enc).X.data
        assert np.max(np.abs(x_base[:k + 1] - x_mut[:k + 1])) < 1e-12, f"leak into row {k}"


def test_input_sequence_truncates_to_latest():
    cfg = micro_cfg(short_encoder="mean")
    feat = InteractionFeaturizer(10, cfg, rng())
    enc = ShortTermEncoder(cfg.d_full, cfg, np.random.default_rng(1))
    rows = [row(t * 10, item_id=t % 3) for t in range(8)]
    seq = build_input_sequence(rows, feat, enc, max_seq=3)
    assert seq.n == 3
    assert seq.timestamps.tolist() == [50, 60, 70]


def test_window_starts_vectorized_consistency():
    ts = np.cumsum(np.random.default_rng(5).integers(1, 50, size=30)).tolist()
    starts = window_starts(ts, 60)
    assert all(starts[k] == window_start(ts, k, 60) for k in range(30))
    assert all(0 <= starts[k] <= k for k in range(30))
