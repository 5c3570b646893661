"""Flat key=value run configuration files.

Dotted sections, '#' comments, strict key validation. The resolved snapshot
written next to every run reproduces it exactly.
"""

from .models import ConvNetSpec, TapSchedule
from .objectives import LossWeights
from .trainer import TrainConfig


class ConfigError(ValueError):
    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


def _parse_tuple(value, cast):
    value = value.strip()
    if not value:
        return ()
    return tuple(cast(v.strip()) for v in value.split(","))


_DEFAULTS = {
    "run.mode": "mimkd",
    "run.seed": "0",
    "train.epochs": "30",
    "train.batch_size": "64",
    "train.lr": "0.05",
    "train.momentum": "0.9",
    "train.weight_decay": "5e-4",
    "train.decay_epochs": "15,22,27",
    "train.decay_factor": "0.1",
    "train.augment": "true",
    "loss.alpha": "1",
    "loss.lambda_g": "1",
    "loss.lambda_l": "0.75",
    "loss.lambda_f": "1",
    "kd.alpha": "0.9",
    "kd.temperature": "4",
    "teacher.style": "stride2",
    "teacher.widths": "32,64,128,256",
    "student.style": "stride2",
    "student.widths": "8,16,32,64",
    "taps.blocks": "2,3,4",
    "critic.hidden": "128",
    "critic.d_proj": "128",
    "critic.bank_capacity": "4096",
    "data.source": "synth-shapes",
    "data.path": "",
    "data.variant": "cifar10",
    "data.num_classes": "8",
    "data.per_class": "625",
    "data.train_count": "4000",
    "data.seed": "0",
}


def parse_config_text(text):
    values = dict(_DEFAULTS)
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in stripped.split("=", 1))
        if key not in _DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}", key=key)
        values[key] = value
    return values


def parse_config(path):
    with open(path) as f:
        return parse_config_text(f.read())


def write_resolved(values, path):
    with open(path, "w") as f:
        for key in sorted(values):
            f.write(f"{key}={values[key]}\n")


def _bool(value):
    if value.lower() in ("true", "1", "yes"):
        return True
    if value.lower() in ("false", "0", "no"):
        return False
    raise ConfigError(f"expected boolean, got {value!r}")


def build_train_config(values, mode=None) -> TrainConfig:
    num_classes = int(values["data.num_classes"])
    try:
        cfg = TrainConfig(
            mode=mode or values["run.mode"],
            epochs=int(values["train.epochs"]),
            batch_size=int(values["train.batch_size"]),
            lr=float(values["train.lr"]),
            momentum=float(values["train.momentum"]),
            weight_decay=float(values["train.weight_decay"]),
            decay_epochs=_parse_tuple(values["train.decay_epochs"], int),
            decay_factor=float(values["train.decay_factor"]),
            seed=int(values["run.seed"]),
            weights=LossWeights(
                alpha=float(values["loss.alpha"]),
                lambda_g=float(values["loss.lambda_g"]),
                lambda_l=float(values["loss.lambda_l"]),
                lambda_f=float(values["loss.lambda_f"]),
            ),
            teacher_spec=ConvNetSpec(
                style=values["teacher.style"],
                widths=_parse_tuple(values["teacher.widths"], int),
                num_classes=num_classes,
            ),
            student_spec=ConvNetSpec(
                style=values["student.style"],
                widths=_parse_tuple(values["student.widths"], int),
                num_classes=num_classes,
            ),
            taps=TapSchedule(blocks=_parse_tuple(values["taps.blocks"], int)),
            critic_hidden=int(values["critic.hidden"]),
            d_proj=int(values["critic.d_proj"]),
            bank_capacity=int(values["critic.bank_capacity"]),
            kd_alpha=float(values["kd.alpha"]),
            kd_temperature=float(values["kd.temperature"]),
            use_augment=_bool(values["train.augment"]),
        )
        cfg.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def load_dataset(values):
    """Build (train_handle, test_handle) from the data.* section."""
    from .data import load_cifar_binary, synth_shapes_dataset

    source = values["data.source"]
    train_count = int(values["data.train_count"])
    if source == "synth-shapes":
        handle = synth_shapes_dataset(
            num_classes=int(values["data.num_classes"]),
            per_class=int(values["data.per_class"]),
            seed=int(values["data.seed"]),
            shuffle_seed=int(values["run.seed"]),
        )
    elif source == "cifar-file":
        if not values["data.path"]:
            raise ConfigError("data.path required for cifar-file source", key="data.path")
        handle = load_cifar_binary(
            values["data.path"], values["data.variant"],
            shuffle_seed=int(values["run.seed"]),
        )
    else:
        raise ConfigError(f"unknown data.source {source!r}", key="data.source")
    return handle.split(train_count)
