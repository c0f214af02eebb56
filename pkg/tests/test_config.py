"""Config parsing, validation, and hashing."""

import pytest

from sessionrec.config import (
    Config,
    config_from_dict,
    default_heads,
    load_config,
    parse_duration,
)
from sessionrec.errors import ConfigError


def test_parse_duration_units():
    assert parse_duration("1w") == 604800
    assert parse_duration("1d") == 86400
    assert parse_duration("6h") == 21600
    assert parse_duration("30m") == 1800
    assert parse_duration("45s") == 45
    assert parse_duration(3600) == 3600


@pytest.mark.parametrize("bad", ["1x", "w", "-3d", "1.5h", ""])
def test_parse_duration_rejects(bad):
    with pytest.raises(ConfigError):
        parse_duration(bad)


def test_default_config_is_valid():
    cfg = Config().validate()
    assert cfg.features.d_full == cfg.features.d_item + 4 * cfg.features.d_meta + 2
    assert [h.name for h in cfg.active_heads()] == ["action_type", "genre", "movie_show", "tsr"]


def test_default_head_roster():
    heads = default_heads()
    by_name = {h.name: h for h in heads}
    assert by_name["action_type"].cardinality == 11
    assert by_name["action_type"].core_labels == (0, 1, 2, 3, 4)
    assert by_name["genre"].cardinality == 21 and by_name["genre"].multi_label
    assert by_name["movie_show"].cardinality == 2
    assert by_name["tsr"].cardinality == 3
    assert not by_name["tsr"].multi_label


def test_from_dict_parses_sections_and_durations():
    cfg = config_from_dict({
        "features": {"window": "1d", "d_item": 8},
        "model": {"intent": {"d_model": 16, "heads": 2}, "pos_max_delta": "30d"},
        "variant": {"kind": "v2", "heads": ["genre", "tsr"]},
        "training": {"epochs": 3},
    })
    assert cfg.features.window == 86400
    assert cfg.features.d_item == 8
    assert cfg.model.intent.d_model == 16
    assert cfg.model.pos_max_delta == 30 * 86400
    assert cfg.variant.heads == ("genre", "tsr")
    assert [h.name for h in cfg.active_heads()] == ["genre", "tsr"]
    assert cfg.training.epochs == 3


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="unknown top-level"):
        config_from_dict({"trainig": {}})
    with pytest.raises(ConfigError, match="unknown keys in 'training'"):
        config_from_dict({"training": {"learning_rate": 0.1}})


def test_v0_with_heads_rejected():
    with pytest.raises(ConfigError, match="v0 cannot have intent heads"):
        config_from_dict({"variant": {"kind": "v0", "heads": ["genre"]}})
    cfg = config_from_dict({"variant": {"kind": "v0"}})
    assert cfg.variant.heads == () and not cfg.variant.uses_intent


def test_variant_unknown_head_rejected():
    with pytest.raises(ConfigError, match="unknown heads"):
        config_from_dict({"variant": {"kind": "v3", "heads": ["genre", "mood"]}})


def test_variant_flags():
    assert not Config().with_variant("v0").variant.uses_short
    assert Config().with_variant("v1").variant.uses_intent
    assert not Config().with_variant("v1").variant.hierarchical
    assert Config().with_variant("v2").variant.hierarchical
    v3 = Config().with_variant("v3").variant
    assert v3.uses_short and v3.hierarchical


def test_heads_not_divisible_rejected():
    with pytest.raises(ConfigError, match="not divisible"):
        config_from_dict({"model": {"intent": {"d_model": 30, "heads": 4}}})


def test_hash_stable_and_sensitive():
    a = Config().validate()
    b = Config().validate()
    assert a.hash() == b.hash()
    c = config_from_dict({"training": {"lr": 0.01}})
    assert c.hash() != a.hash()
    assert len(a.hash()) == 16


def test_model_hash_ignores_loop_params_but_not_shapes():
    base = Config().validate()
    loop_changed = config_from_dict({"training": {"epochs": 99, "seed": 7, "lr": 0.5}})
    assert loop_changed.model_hash() == base.model_hash()
    assert loop_changed.hash() != base.hash()
    shape_changed = config_from_dict({"model": {"d_proj": 9}})
    assert shape_changed.model_hash() != base.model_hash()
    variant_changed = base.with_variant("v2")
    assert variant_changed.model_hash() != base.model_hash()
    items_changed = config_from_dict({"data": {"num_items": 999}})
    assert items_changed.model_hash() != base.model_hash()


def test_load_config_with_overrides(tmp_path):
    p = tmp_path / "cfg.yaml"
    p.write_text("training:\n  epochs: 4\nvariant:\n  kind: v2\n")
    cfg = load_config(str(p), overrides={"training.seed": 9, "variant.kind": "v1"})
    assert cfg.training.epochs == 4
    assert cfg.training.seed == 9
    assert cfg.variant.kind == "v1"


def test_load_config_defaults_without_file():
    cfg = load_config(None)
    assert cfg.variant.kind == "v3"


def test_load_config_bad_yaml(tmp_path):
    p = tmp_path / "cfg.yaml"
    p.write_text("training: [unclosed\n  epochs: 4\n")
    with pytest.raises(ConfigError, match="cannot parse config file"):
        load_config(str(p))
