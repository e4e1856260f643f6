import dataclasses

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robustclf.config import (
    TrainConfig,
    config_to_text,
    load_config,
    parse_config_text,
    parse_value,
    save_config,
)


def test_defaults_match_reference_protocol():
    cfg = TrainConfig()
    assert (cfg.alpha, cfg.gamma, cfg.eta, cfg.power) == (0.8, 0.5, 0.6, 2.0)
    assert (cfg.delta, cfg.lr, cfg.batch_size) == (0.05, 1e-3, 32)
    assert cfg.hidden_dim == 1536 and cfg.dropout_rate == 0.1
    assert cfg.use_cvar and cfg.use_auc and cfg.use_sam
    assert cfg.sam_variant == "sign" and cfg.lr_schedule == "cosine"


@pytest.mark.parametrize(
    "field,value",
    [
        ("alpha", 0.0),
        ("alpha", 1.1),
        ("gamma", -0.01),
        ("gamma", 1.01),
        ("eta", 0.0),
        ("power", 1.0),
        ("delta", 0.0),
        ("lr", -1e-3),
        ("batch_size", 1),
        ("max_iterations", 0),
        ("seed", -1),
        ("hidden_dim", 0),
        ("dropout_rate", 1.0),
        ("dropout_rate", -0.1),
        ("sam_variant", "linf"),
        ("lr_schedule", "step"),
    ],
)
def test_field_domain_validation(field, value):
    with pytest.raises(ValueError):
        TrainConfig(**{field: value})


def test_zero_lr_allowed():
    assert TrainConfig(lr=0.0).lr == 0.0


def test_effective_alpha_and_gamma_toggles():
    cfg = TrainConfig(alpha=0.8, gamma=0.5)
    assert cfg.effective_alpha == 0.8 and cfg.effective_gamma == 0.5
    assert TrainConfig(use_cvar=False).effective_alpha == 1.0
    assert TrainConfig(use_auc=False).effective_gamma == 1.0
    # raw fields stay untouched so a saved snapshot reproduces the run
    assert TrainConfig(use_cvar=False).alpha == 0.8


def test_parse_value_types():
    assert parse_value("alpha", "0.25") == 0.25
    assert parse_value("batch_size", " 16 ") == 16
    assert parse_value("use_sam", "false") is False
    assert parse_value("sam_variant", "l2_normalized") == "l2_normalized"


def test_parse_value_errors():
    with pytest.raises(ValueError, match="unknown config key"):
        parse_value("momentum", "0.9")
    with pytest.raises(ValueError, match="true or false"):
        parse_value("use_sam", "yes")
    with pytest.raises(ValueError):
        parse_value("batch_size", "sixteen")


def test_parse_config_text_comments_and_blanks():
    values = parse_config_text("# protocol\n\nalpha=0.9\n  gamma = 0.3\n")
    assert values == {"alpha": 0.9, "gamma": 0.3}


def test_parse_config_text_bad_line_reports_lineno():
    with pytest.raises(ValueError, match="line 2"):
        parse_config_text("alpha=0.9\nnot a pair\n")


def test_round_trip_all_fields(tmp_path):
    cfg = TrainConfig(
        alpha=0.37, gamma=0.125, eta=0.55, power=2.5, delta=0.01,
        lr=3e-4, batch_size=8, max_iterations=7, seed=99, hidden_dim=32,
        dropout_rate=0.2, use_cvar=False, use_auc=True, use_sam=False,
        sam_variant="l2_normalized", lr_schedule="constant",
    )
    path = tmp_path / "run.cfg"
    save_config(cfg, path)
    assert load_config(path) == cfg


@given(
    st.floats(0.01, 1.0),
    st.floats(0.0, 1.0),
    st.floats(1e-6, 1e-1),
    st.integers(2, 512),
)
@settings(max_examples=60, deadline=None)
def test_round_trip_is_exact_for_arbitrary_floats(alpha, gamma, lr, batch_size):
    cfg = TrainConfig(alpha=alpha, gamma=gamma, lr=lr, batch_size=batch_size)
    assert parse_config_text(config_to_text(cfg)) == {
        f.name: getattr(cfg, f.name) for f in dataclasses.fields(TrainConfig)
    }


def test_load_config_applies_over_base(tmp_path):
    path = tmp_path / "partial.cfg"
    path.write_text("alpha=0.6\n")
    base = TrainConfig(gamma=0.25)
    cfg = load_config(path, base=base)
    assert cfg.alpha == 0.6 and cfg.gamma == 0.25


def test_load_config_rejects_invalid_combination(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("alpha=1.5\n")
    with pytest.raises(ValueError):
        load_config(path)


def test_config_is_frozen():
    cfg = TrainConfig()
    with pytest.raises(dataclasses.FrozenInstanceError):
        cfg.alpha = 0.9
