"""Model assembly: the two-stage architecture and its ablation variants.

The full model (v3) runs per-interaction features plus short-term window
features through an intent encoder, predicts next-interaction metadata with
per-label-space heads, compresses the head outputs into one aggregated
embedding via trainable attention, and feeds that embedding alongside the
input features into a second encoder that scores the whole catalog for the
next item.

Variant ladder:
  v0  item encoder only; no metadata heads.
  v1  one shared encoder; metadata heads and the item head both read its
      output, but head outputs do not feed the item path.
  v2  separate intent encoder; aggregated intent embedding joins the item
      encoder input.
  v3  v2 plus the short-term window features.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import Config, HeadConfig
from .data import Interaction
from .errors import ShapeError
from .features import (
    InputSeq,
    InteractionFeaturizer,
    ShortTermEncoder,
    build_input_sequence,
)
from .nn import INIT_STD, Linear, TransformerEncoder
from . import tensor as T
from .tensor import Tensor


@dataclass
class IntentBundle:
    """Per-position intent predictions and their aggregation."""
    encoding: Tensor                  # (n, d_enc) sequence encoding behind the heads
    head_logits: dict[str, Tensor]    # head name -> (n, cardinality)
    head_scores: dict[str, Tensor]    # softmax rows or element-wise sigmoid
    alpha_logits: Tensor | None       # (n, M) pre-softmax head-attention scores
    alpha: Tensor | None              # (n, M), rows sum to 1
    z: Tensor | None                  # (n, d_proj) aggregated intent embedding


@dataclass
class ModelOutput:
    seq: InputSeq
    item_logits: Tensor               # (n, num_items)
    intent: IntentBundle | None

    def item_scores(self) -> Tensor:
        """Softmax distribution over the catalog at every position."""
        return self.item_logits.softmax()


def aggregate_intent_embedding(projected: list[Tensor], att_vec: Tensor):
    """Combine per-head projected score vectors into one embedding per row.

    Each head contributes a (n, d_proj) matrix. A shared attention vector
    scores every head's projection per row; the scores softmax across heads
    and weight the sum. Returns (z, alpha, alpha_logits).
    """
    if not projected:
        raise ShapeError("aggregate_intent_embedding needs at least one head")
    alpha_logits = T.concat_cols([p.matmul(att_vec) for p in projected])
    alpha = alpha_logits.softmax()
    z = T.scale_rows(projected[0], alpha.slice_cols(0, 1))
    for i in range(1, len(projected)):
        z = z + T.scale_rows(projected[i], alpha.slice_cols(i, i + 1))
    return z, alpha, alpha_logits


class RecModel:
    def __init__(self, cfg: Config, rng: np.random.Generator):
        cfg.validate()
        self.cfg = cfg
        var = cfg.variant
        feats = cfg.features
        num_items = cfg.data.num_items
        self.num_items = num_items
        self.heads: list[HeadConfig] = cfg.active_heads()

        self.featurizer = InteractionFeaturizer(num_items, feats, rng)
        self.short = ShortTermEncoder(feats.d_full, feats, rng) if var.uses_short else None
        d_x = feats.d_full + (feats.d_short if var.uses_short else 0)

        self.intent_encoder = None
        if var.hierarchical:
            self.intent_encoder = TransformerEncoder(
                d_x, cfg.model.intent, cfg.model.pos_buckets, cfg.model.pos_max_delta,
                rng, "intent_enc")
            d_behind_heads = cfg.model.intent.d_model
        else:
            # v1 attaches its heads to the shared (item) encoder output
            d_behind_heads = cfg.model.item.d_model

        self.head_fcs = {h.name: Linear(d_behind_heads, h.cardinality, rng, f"head.{h.name}")
                         for h in self.heads}

        self.projs = {}
        self.att_vec = None
        d_item_in = d_x
        if var.hierarchical:
            self.projs = {h.name: Linear(h.cardinality, cfg.model.d_proj, rng,
                                         f"agg.proj.{h.name}")
                          for h in self.heads}
            self.att_vec = T.param(rng.normal(0.0, INIT_STD, (cfg.model.d_proj, 1)),
                                   name="agg.att")
            d_item_in = d_x + cfg.model.d_proj

        self.item_encoder = TransformerEncoder(
            d_item_in, cfg.model.item, cfg.model.pos_buckets, cfg.model.pos_max_delta,
            rng, "item_enc")
        self.item_head = Linear(cfg.model.item.d_model, num_items, rng, "item_head")

    # -- forward ------------------------------------------------------------

    def _intent_bundle(self, encoding: Tensor, aggregate: bool) -> IntentBundle:
        logits, scores = {}, {}
        for h in self.heads:
            lg = self.head_fcs[h.name](encoding)
            logits[h.name] = lg
            scores[h.name] = lg.sigmoid() if h.multi_label else lg.softmax()
        if not aggregate:
            return IntentBundle(encoding, logits, scores, None, None, None)
        projected = [self.projs[h.name](scores[h.name]) for h in self.heads]
        z, alpha, alpha_logits = aggregate_intent_embedding(projected, self.att_vec)
        return IntentBundle(encoding, logits, scores, alpha_logits, alpha, z)

    def forward(self, interactions: list[Interaction]) -> ModelOutput:
        seq = build_input_sequence(interactions, self.featurizer, self.short,
                                   max_seq=self.cfg.features.max_seq)
        var = self.cfg.variant
        if var.hierarchical:
            enc = self.intent_encoder(seq.X, seq.timestamps)
            intent = self._intent_bundle(enc, aggregate=True)
            item_in = T.concat_cols([seq.X, intent.z])
            e_item = self.item_encoder(item_in, seq.timestamps)
        else:
            e_item = self.item_encoder(seq.X, seq.timestamps)
            intent = self._intent_bundle(e_item, aggregate=False) if self.heads else None
        return ModelOutput(seq=seq, item_logits=self.item_head(e_item), intent=intent)

    # -- parameter bookkeeping ---------------------------------------------

    def params(self) -> list[Tensor]:
        out = self.featurizer.params()
        if self.short is not None:
            out += self.short.params()
        if self.intent_encoder is not None:
            out += self.intent_encoder.params()
        for h in self.heads:
            out += self.head_fcs[h.name].params()
        for h in self.heads:
            if h.name in self.projs:
                out += self.projs[h.name].params()
        if self.att_vec is not None:
            out.append(self.att_vec)
        out += self.item_encoder.params()
        out += self.item_head.params()
        return out

    def named_params(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for p in self.params():
            if p.name is None or p.name in out:
                raise ShapeError(f"parameter name collision or missing name: {p.name!r}")
            out[p.name] = p
        return out

    def intent_head_params(self) -> list[Tensor]:
        """Parameters of the metadata prediction heads themselves."""
        out = []
        for h in self.heads:
            out += self.head_fcs[h.name].params()
        return out
