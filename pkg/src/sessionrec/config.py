"""Configuration schema: one declarative document covering data generation,
features, model dimensions, prediction heads, ablation variant, and training.

Loaded from YAML (JSON works too), with CLI flag overrides applied on top.
A config hash pins checkpoints and manifests to the exact settings used.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import asdict, dataclass, field, replace
from typing import Any

import yaml

from .errors import ConfigError

# Label-space constants of the engagement schema.
NUM_ACTION_TYPES = 11
NUM_GENRES = 21
NUM_MOVIE_SHOW = 2
NUM_TSR = 3
CORE_ACTION_TYPES = (0, 1, 2, 3, 4)

VARIANT_KINDS = ("v0", "v1", "v2", "v3")

_DURATION_UNITS = {"s": 1, "m": 60, "h": 3600, "d": 86400, "w": 604800}


def parse_duration(value) -> int:
    """'1w', '12h', '90d', or a plain number of seconds -> seconds."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        if value < 0:
            raise ConfigError(f"duration must be >= 0, got {value}")
        return int(value)
    m = re.fullmatch(r"\s*(\d+)\s*([smhdw])\s*", str(value))
    if not m:
        raise ConfigError(f"cannot parse duration {value!r} (expected e.g. '1w', '1d', '6h', or seconds)")
    return int(m.group(1)) * _DURATION_UNITS[m.group(2)]


@dataclass
class GeneratorConfig:
    """Synthetic engagement generator knobs."""
    num_users: int = 1200
    num_items: int = 400
    min_len: int = 16
    max_len: int = 28
    k_latent: int = 3
    dwell_hours: float = 96.0  # mean wall-clock lifetime of a latent state
    genre_focus: float = 0.85
    action_focus: float = 0.7
    ms_focus: float = 0.8
    recency_strength: float = 0.7
    popularity_exponent: float = 0.8  # global Zipf sharpness for item choice
    gap_hours_min: float = 3.0  # per-user mean inter-arrival gap, log-uniform
    gap_hours_max: float = 24.0
    split_ratios: tuple[float, float, float] = (0.80, 0.06, 0.14)

    def validate(self):
        if self.num_items < 1:
            raise ConfigError(f"num_items must be >= 1, got {self.num_items}")
        if self.popularity_exponent < 0:
            raise ConfigError(
                f"popularity_exponent must be >= 0, got {self.popularity_exponent}")
        if not 0 < self.gap_hours_min <= self.gap_hours_max:
            raise ConfigError(
                f"need 0 < gap_hours_min <= gap_hours_max, got "
                f"{self.gap_hours_min}..{self.gap_hours_max}")
        if self.num_users < 1:
            raise ConfigError(f"num_users must be >= 1, got {self.num_users}")
        if self.min_len < 2 or self.max_len < self.min_len:
            raise ConfigError(f"need 2 <= min_len <= max_len, got {self.min_len}..{self.max_len}")
        if self.k_latent < 2:
            raise ConfigError(f"k_latent must be >= 2, got {self.k_latent}")
        if abs(sum(self.split_ratios) - 1.0) > 1e-9:
            raise ConfigError(f"split ratios must sum to 1, got {self.split_ratios}")


@dataclass
class FeatureConfig:
    """Per-interaction feature dims plus the short-term window."""
    d_item: int = 24
    d_meta: int = 8
    d_short: int = 16
    window: int = 172800  # seconds; accepts '1w' style strings in config files
    duration_max: float = 14400.0
    short_encoder: str = "mean"  # or "transformer"
    short_heads: int = 2
    short_ffn: int = 32
    max_seq: int = 100  # keep only each user's latest interactions beyond this

    # item + 4 categorical metadata embeddings + 2 numeric scalars
    @property
    def d_full(self) -> int:
        return self.d_item + 4 * self.d_meta + 2

    def validate(self):
        for name in ("d_item", "d_meta", "d_short"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.window < 0:
            raise ConfigError("window must be >= 0")
        if self.short_encoder not in ("transformer", "mean"):
            raise ConfigError(f"short_encoder must be 'transformer' or 'mean', got {self.short_encoder!r}")
        if self.duration_max <= 0:
            raise ConfigError("duration_max must be > 0")
        if self.max_seq < 2:
            raise ConfigError("max_seq must be >= 2")


@dataclass
class EncoderConfig:
    d_model: int = 32
    layers: int = 2
    heads: int = 4
    d_ffn: int = 48

    def validate(self, label: str):
        if self.d_model < 1 or self.layers < 1 or self.heads < 1 or self.d_ffn < 1:
            raise ConfigError(f"{label} encoder dims must all be >= 1")
        if self.d_model % self.heads != 0:
            raise ConfigError(f"{label} encoder: d_model {self.d_model} not divisible by heads {self.heads}")


@dataclass
class HeadConfig:
    """One intent prediction head over a categorical label space."""
    name: str
    cardinality: int
    multi_label: bool = False
    core_labels: tuple[int, ...] | None = None

    def validate(self):
        if self.cardinality < 2:
            raise ConfigError(f"head {self.name!r}: cardinality must be >= 2, got {self.cardinality}")
        if self.core_labels is not None:
            if len(self.core_labels) < 1:
                raise ConfigError(f"head {self.name!r}: core_labels must select at least one label")
            bad = [c for c in self.core_labels if not 0 <= c < self.cardinality]
            if bad:
                raise ConfigError(f"head {self.name!r}: core labels {bad} out of range [0, {self.cardinality})")


def default_heads() -> list[HeadConfig]:
    return [
        HeadConfig("action_type", NUM_ACTION_TYPES, core_labels=CORE_ACTION_TYPES),
        HeadConfig("genre", NUM_GENRES, multi_label=True),
        HeadConfig("movie_show", NUM_MOVIE_SHOW),
        HeadConfig("tsr", NUM_TSR),
    ]


@dataclass
class ModelConfig:
    intent: EncoderConfig = field(default_factory=lambda: EncoderConfig(32, 2, 4, 48))
    item: EncoderConfig = field(default_factory=lambda: EncoderConfig(48, 2, 4, 64))
    d_proj: int = 16
    pos_buckets: int = 64
    pos_max_delta: int = 7776000  # 90d

    def validate(self):
        self.intent.validate("intent")
        self.item.validate("item")
        if self.d_proj < 1:
            raise ConfigError("d_proj must be >= 1")
        if self.pos_buckets < 2:
            raise ConfigError("pos_buckets must be >= 2")


@dataclass
class Variant:
    """Ablation switch.

    v0: item path only, no short-term features, no intent heads.
    v1: one shared encoder with intent heads attached; intent output not fed
        to the item scorer.
    v2: two encoders; aggregated intent embedding fed into the item encoder.
    v3: v2 plus short-term window features.
    """
    kind: str = "v3"
    heads: tuple[str, ...] = ("action_type", "genre", "movie_show", "tsr")

    def validate(self, roster: list[HeadConfig]):
        if self.kind not in VARIANT_KINDS:
            raise ConfigError(f"variant must be one of {VARIANT_KINDS}, got {self.kind!r}")
        known = {h.name for h in roster}
        unknown = [h for h in self.heads if h not in known]
        if unknown:
            raise ConfigError(f"variant names unknown heads {unknown}; roster has {sorted(known)}")
        if self.kind == "v0" and self.heads:
            raise ConfigError("variant v0 cannot have intent heads")
        if self.kind != "v0" and not self.heads:
            raise ConfigError(f"variant {self.kind} needs at least one intent head")

    @property
    def uses_short(self) -> bool:
        return self.kind == "v3"

    @property
    def uses_intent(self) -> bool:
        return self.kind != "v0"

    @property
    def hierarchical(self) -> bool:
        return self.kind in ("v2", "v3")


@dataclass
class TrainConfig:
    intent_weight: float = 2.0  # the joint-loss coefficient on intent losses
    lr: float = 0.002
    batch_size: int = 64
    epochs: int = 9
    seed: int = 0
    threads: int = 1

    def validate(self):
        if self.intent_weight < 0:
            raise ConfigError("intent_weight must be >= 0")
        if self.lr <= 0:
            raise ConfigError("lr must be > 0")
        if self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("batch_size must be >= 1 and epochs >= 0")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")


@dataclass
class Config:
    data: GeneratorConfig = field(default_factory=GeneratorConfig)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    heads: list[HeadConfig] = field(default_factory=default_heads)
    variant: Variant = field(default_factory=Variant)
    training: TrainConfig = field(default_factory=TrainConfig)

    def validate(self) -> "Config":
        self.data.validate()
        self.features.validate()
        self.model.validate()
        names = [h.name for h in self.heads]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate head names in roster: {names}")
        for h in self.heads:
            h.validate()
        self.variant.validate(self.heads)
        self.training.validate()
        return self

    def active_heads(self) -> list[HeadConfig]:
        by_name = {h.name: h for h in self.heads}
        return [by_name[n] for n in self.variant.heads] if self.variant.uses_intent else []

    def with_variant(self, kind: str, heads: tuple[str, ...] | None = None) -> "Config":
        if kind == "v0":
            v = Variant("v0", ())
        else:
            v = Variant(kind, tuple(heads) if heads is not None else tuple(h.name for h in self.heads))
        cfg = replace(self, variant=v)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        d = asdict(self)
        d["data"]["split_ratios"] = list(self.data.split_ratios)
        d["variant"]["heads"] = list(self.variant.heads)
        for h in d["heads"]:
            if h["core_labels"] is not None:
                h["core_labels"] = list(h["core_labels"])
        return d

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def model_hash(self) -> str:
        """Hash of everything that fixes parameter shapes and meaning.

        Checkpoints are compatible across runs iff this matches; loop
        settings like epochs, lr, or the seed may differ (e.g. on resume).
        """
        d = self.to_dict()
        scope = {"num_items": d["data"]["num_items"], "features": d["features"],
                 "model": d["model"], "heads": d["heads"], "variant": d["variant"]}
        blob = json.dumps(scope, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _take(section: dict, cls_fields: dict, label: str) -> dict:
    unknown = set(section) - set(cls_fields)
    if unknown:
        raise ConfigError(f"unknown keys in {label!r} section: {sorted(unknown)}")
    return section


def config_from_dict(raw: dict) -> Config:
    if not isinstance(raw, dict):
        raise ConfigError(f"config root must be a mapping, got {type(raw).__name__}")
    unknown = set(raw) - {"data", "features", "model", "heads", "variant", "training"}
    if unknown:
        raise ConfigError(f"unknown top-level config sections: {sorted(unknown)}")
    cfg = Config()

    data = dict(raw.get("data", {}))
    if "split_ratios" in data:
        data["split_ratios"] = tuple(float(x) for x in data["split_ratios"])
    cfg.data = replace(cfg.data, **_take(data, GeneratorConfig.__dataclass_fields__, "data"))

    feats = dict(raw.get("features", {}))
    if "window" in feats:
        feats["window"] = parse_duration(feats["window"])
    cfg.features = replace(cfg.features, **_take(feats, FeatureConfig.__dataclass_fields__, "features"))

    model = dict(raw.get("model", {}))
    for enc_name in ("intent", "item"):
        if enc_name in model:
            enc = _take(dict(model[enc_name]), EncoderConfig.__dataclass_fields__, f"model.{enc_name}")
            model[enc_name] = replace(getattr(cfg.model, enc_name), **enc)
    if "pos_max_delta" in model:
        model["pos_max_delta"] = parse_duration(model["pos_max_delta"])
    cfg.model = replace(cfg.model, **_take(model, ModelConfig.__dataclass_fields__, "model"))

    if "heads" in raw:
        heads = []
        for h in raw["heads"]:
            h = dict(h)
            if h.get("core_labels") is not None:
                h["core_labels"] = tuple(int(c) for c in h["core_labels"])
            heads.append(HeadConfig(**_take(h, HeadConfig.__dataclass_fields__, "heads[]")))
        cfg.heads = heads

    var = dict(raw.get("variant", {}))
    if "heads" in var:
        if var["heads"] == "all":
            var["heads"] = tuple(h.name for h in cfg.heads)
        else:
            var["heads"] = tuple(var["heads"])
    elif var.get("kind") == "v0":
        var["heads"] = ()
    else:
        var["heads"] = tuple(h.name for h in cfg.heads)
    cfg.variant = Variant(**_take(var, Variant.__dataclass_fields__, "variant"))

    cfg.training = replace(cfg.training,
                           **_take(dict(raw.get("training", {})), TrainConfig.__dataclass_fields__, "training"))
    return cfg.validate()


def load_config(path: str | None = None, overrides: dict[str, Any] | None = None) -> Config:
    """Load the config file (defaults when absent) and apply flat overrides.

    Override keys use dotted paths into sections, e.g. ``training.seed`` or
    ``variant.kind``.
    """
    raw: dict = {}
    if path is not None:
        with open(path) as fh:
            try:
                raw = yaml.safe_load(fh) or {}
            except yaml.YAMLError as exc:
                raise ConfigError(f"cannot parse config file {path}: {exc}") from exc
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        parts = key.split(".")
        node = raw
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r} conflicts with scalar section")
        node[parts[-1]] = value
    return config_from_dict(raw)
