import pytest

from mimkd.config import (
    ConfigError,
    build_train_config,
    load_dataset,
    parse_config_text,
    write_resolved,
)


def test_defaults_build_valid_config():
    values = parse_config_text("")
    cfg = build_train_config(values)
    assert cfg.mode == "mimkd"
    assert cfg.epochs == 30
    assert cfg.decay_epochs == (15, 22, 27)
    assert cfg.weights.lambda_l == 0.75
    assert cfg.teacher_spec.widths == (32, 64, 128, 256)
    assert cfg.student_spec.widths == (8, 16, 32, 64)


def test_overrides_comments_and_whitespace():
    text = """
    # a comment
    train.epochs = 5        # trailing comment
    train.decay_epochs = 2,4
    loss.lambda_g = 0.5
    run.seed=3
    """
    cfg = build_train_config(parse_config_text(text))
    assert cfg.epochs == 5
    assert cfg.decay_epochs == (2, 4)
    assert cfg.weights.lambda_g == 0.5
    assert cfg.seed == 3


def test_unknown_key_rejected():
    with pytest.raises(ConfigError) as exc:
        parse_config_text("train.leraning_rate = 0.1")
    assert exc.value.key == "train.leraning_rate"


def test_malformed_line_rejected():
    with pytest.raises(ConfigError, match="line 1"):
        parse_config_text("just some words")


def test_invalid_values_surface_as_config_errors():
    with pytest.raises(ConfigError, match="decay_epochs"):
        build_train_config(parse_config_text("train.decay_epochs = 40,50"))
    with pytest.raises(ConfigError, match="style"):
        build_train_config(parse_config_text("teacher.style = vgg"))
    with pytest.raises(ConfigError, match="boolean"):
        build_train_config(parse_config_text("train.augment = maybe"))


def test_mode_override_argument():
    cfg = build_train_config(parse_config_text(""), mode="ce")
    assert cfg.mode == "ce"


def test_resolved_snapshot_roundtrip(tmp_path):
    values = parse_config_text("train.epochs = 7\nloss.lambda_f = 0")
    path = tmp_path / "config.resolved"
    write_resolved(values, path)
    again = parse_config_text(path.read_text())
    assert again == values


def test_load_dataset_synth_split():
    values = parse_config_text(
        "data.per_class = 10\ndata.train_count = 60\ndata.num_classes = 8"
    )
    train, test = load_dataset(values)
    assert len(train) == 60
    assert len(test) == 20


def test_load_dataset_cifar_requires_path():
    with pytest.raises(ConfigError, match="data.path"):
        load_dataset(parse_config_text("data.source = cifar-file"))


def test_load_dataset_unknown_source():
    values = parse_config_text("")
    values["data.source"] = "webcam"
    with pytest.raises(ConfigError, match="data.source"):
        load_dataset(values)
