"""Training and evaluation harness: teacher pretraining, the distillation
modes (mimkd / kd / ce), the stepped learning-rate schedule, and metrics
emission.
"""

import csv
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import nn
from . import tensor as T
from .checkpoint import load_checkpoint, save_checkpoint
from .critics import ConvolveCritic, ProjectDotCritic
from .data import NormStats, augment, standardize
from .models import ConvNetSpec, TapSchedule, build_convnet, forward_with_taps, set_eval, set_train
from .objectives import (
    CriticSet,
    LossWeights,
    MemoryBank,
    RepresentationBundle,
    build_pairing_set,
    kd_baseline_loss,
    total_loss,
)
from .tensor import Tensor

MODES = ("teacher", "mimkd", "kd", "ce")


@dataclass
class TrainConfig:
    mode: str = "mimkd"
    epochs: int = 30
    batch_size: int = 64
    lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 5e-4
    decay_epochs: tuple = (15, 22, 27)
    decay_factor: float = 0.1
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    teacher_spec: ConvNetSpec = field(
        default_factory=lambda: ConvNetSpec(widths=(32, 64, 128, 256))
    )
    student_spec: ConvNetSpec = field(
        default_factory=lambda: ConvNetSpec(widths=(8, 16, 32, 64))
    )
    taps: TapSchedule = field(default_factory=TapSchedule)
    critic_hidden: int = 128
    d_proj: int = 128
    bank_capacity: int = 4096
    kd_alpha: float = 0.9
    kd_temperature: float = 4.0
    use_augment: bool = True

    def validate(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        decays = list(self.decay_epochs)
        if decays != sorted(set(decays)) or any(e >= self.epochs for e in decays):
            raise ValueError("decay_epochs must be strictly increasing and < epochs")
        self.weights.validate()
        self.teacher_spec.validate()
        self.student_spec.validate()
        self.taps.validate()


@dataclass
class RunRecord:
    mode: str
    epochs: list = field(default_factory=list)  # (epoch, loss dict, test_acc, wall)
    best_acc: float = 0.0
    final_acc: float = 0.0
    checkpoint_path: str = None


def lr_at(config: TrainConfig, epoch: int) -> float:
    """Initial lr times decay_factor per decay epoch already reached."""
    hits = sum(1 for e in config.decay_epochs if e <= epoch)
    return config.lr * config.decay_factor**hits


class MetricsWriter:
    """Append-only CSV with a fixed header per file."""

    def __init__(self, path, columns):
        self.path = path
        self.columns = list(columns)
        with open(path, "w", newline="") as f:
            csv.writer(f, lineterminator="\n").writerow(
                ["run_id", "phase", "epoch", "step"] + self.columns
            )

    def write(self, run_id, phase, epoch, step, values):
        with open(self.path, "a", newline="") as f:
            csv.writer(f, lineterminator="\n").writerow(
                [run_id, phase, epoch, step]
                + [f"{values[c]:.6f}" for c in self.columns]
            )


def _rng(seed, stream):
    return np.random.default_rng([seed, stream])


def _batches(handle, stats, batch_size, epoch, do_augment, aug_rng):
    order = handle.epoch_order(epoch)
    images = standardize(handle.images, stats, dtype=T.get_default_dtype())
    for start in range(0, len(order) - batch_size + 1, batch_size):
        idx = order[start : start + batch_size]
        batch = images[idx]
        if do_augment:
            batch = augment(batch, aug_rng)
        yield Tensor(batch), handle.labels[idx]


def evaluate(model, handle, stats, batch_size=256) -> float:
    """Top-1 accuracy in percent over a split, eval-mode normalization."""
    if model.spec.num_classes != handle.num_classes and len(handle):
        if handle.labels.max() >= model.spec.num_classes:
            raise ValueError(
                f"class-count mismatch: model has {model.spec.num_classes}, "
                f"split needs {handle.labels.max() + 1}"
            )
    set_eval(model)
    correct = 0
    images = standardize(handle.images, stats, dtype=T.get_default_dtype())
    with T.no_grad():
        for start in range(0, len(handle), batch_size):
            chunk = Tensor(images[start : start + batch_size])
            out = forward_with_taps(model, chunk)
            pred = out.logits.data.argmax(axis=1)
            correct += int((pred == handle.labels[start : start + batch_size]).sum())
    return 100.0 * correct / len(handle)


def _save_model(path, named, extra=None):
    arrays = dict(named)
    if extra:
        arrays.update(extra)
    save_checkpoint(path, arrays)


def _model_arrays(model, role):
    return {f"model.{role}.{k}": v for k, v in model.state_arrays().items()}


def _load_model(model, ckpt, role):
    prefix = f"model.{role}."
    arrays = {k[len(prefix):]: v for k, v in ckpt.items() if k.startswith(prefix)}
    model.load_state(arrays)


def train_teacher(config: TrainConfig, train_handle, test_handle,
                  out_dir=None, run_id="teacher") -> RunRecord:
    """Cross-entropy training of the wide network; saves its checkpoint."""
    config = replace(config, mode="teacher")
    config.validate()
    stats = NormStats.from_handle(train_handle)
    model = build_convnet(config.teacher_spec, _rng(config.seed, 0), config.taps)
    params = model.parameters()
    aug_rng = _rng(config.seed, 3)
    metrics = _metrics_writer(out_dir, ["lr", "ce", "test_acc"])
    record = RunRecord(mode="teacher")
    for epoch in range(config.epochs):
        t0 = time.time()
        set_train(model)
        lr = lr_at(config, epoch)
        losses = []
        for step, (images, labels) in enumerate(
            _batches(train_handle, stats, config.batch_size, epoch,
                     config.use_augment, aug_rng)
        ):
            out = forward_with_taps(model, images)
            loss = nn.cross_entropy(out.logits, labels)
            if not np.isfinite(loss.data):
                raise FloatingPointError(f"non-finite loss at epoch {epoch} step {step}")
            loss.backward()
            T.sgd_step(params, lr, config.momentum, config.weight_decay)
            losses.append(float(loss.data))
            if metrics:
                metrics.write(run_id, "train", epoch, step,
                              {"lr": lr, "ce": losses[-1], "test_acc": 0.0})
        acc = evaluate(model, test_handle, stats)
        record.epochs.append((epoch, {"ce": float(np.mean(losses))}, acc, time.time() - t0))
        record.best_acc = max(record.best_acc, acc)
        record.final_acc = acc
        if metrics:
            metrics.write(run_id, "eval", epoch, 0,
                          {"lr": lr, "ce": float(np.mean(losses)), "test_acc": acc})
    if out_dir:
        path = os.path.join(out_dir, "teacher.ckpt")
        _save_model(path, _model_arrays(model, "teacher"))
        record.checkpoint_path = path
    return record


def _metrics_writer(out_dir, columns):
    if not out_dir:
        return None
    os.makedirs(out_dir, exist_ok=True)
    return MetricsWriter(os.path.join(out_dir, "metrics.csv"), columns)


def _build_critics(config, pairs, teacher_maps, student_maps, d_t, d_s, rng):
    critics = CriticSet()
    if config.weights.lambda_g:
        critics.global_critic = ProjectDotCritic(
            d_t, d_s, config.critic_hidden, config.d_proj, rng
        )
    if config.weights.lambda_l:
        _, sj = pairs[-1]
        cs = student_maps[sj].shape[1]
        critics.local_critic = ConvolveCritic(d_t + cs, config.critic_hidden, rng)
    if config.weights.lambda_f:
        for k, (ti, sj) in enumerate(pairs):
            cin = teacher_maps[ti].shape[1] + student_maps[sj].shape[1]
            critics.feature_critics[k] = ConvolveCritic(cin, config.critic_hidden, rng)
    return critics


def distill(config: TrainConfig, teacher_ckpt, train_handle, test_handle,
            out_dir=None, run_id=None) -> RunRecord:
    """Distillation run in the configured mode.

    One optimizer covers the student plus the critics of every active
    objective; the teacher is loaded, set to eval, and never updated.
    """
    config.validate()
    if config.mode not in ("mimkd", "kd", "ce"):
        raise ValueError(f"distill expects mode mimkd|kd|ce, got {config.mode!r}")
    run_id = run_id or config.mode
    stats = NormStats.from_handle(train_handle)
    student = build_convnet(config.student_spec, _rng(config.seed, 1), config.taps)
    needs_teacher = config.mode in ("mimkd", "kd")
    teacher = None
    if needs_teacher:
        teacher = build_convnet(config.teacher_spec, _rng(config.seed, 0), config.taps)
        _load_model(teacher, load_checkpoint(teacher_ckpt), "teacher")
        set_eval(teacher)

    critics = CriticSet()
    bank = None
    pairs = None
    if config.mode == "mimkd":
        # probe one batch to size the pairing set and critic inputs; eval
        # mode keeps the probe from touching the student's BN running stats
        probe = standardize(train_handle.images[: config.batch_size], stats,
                            dtype=T.get_default_dtype())
        set_eval(student)
        with T.no_grad():
            t_out = forward_with_taps(teacher, Tensor(probe))
            s_out = forward_with_taps(student, Tensor(probe))
        pairs = build_pairing_set(t_out.maps, s_out.maps)
        critics = _build_critics(
            config, pairs, t_out.maps, s_out.maps,
            teacher.feature_dim, student.feature_dim, _rng(config.seed, 2),
        )
        bank = MemoryBank(config.bank_capacity, config.d_proj)

    params = student.parameters() + critics.parameters()
    aug_rng = _rng(config.seed, 3)
    columns = ["lr", "total", "ce", "global_mi", "local_mi", "feature_mi", "test_acc"]
    if config.mode == "kd":
        columns = ["lr", "total", "ce", "test_acc"]
    elif config.mode == "ce":
        columns = ["lr", "ce", "test_acc"]
    metrics = _metrics_writer(out_dir, columns)
    record = RunRecord(mode=config.mode)

    for epoch in range(config.epochs):
        t0 = time.time()
        set_train(student)
        lr = lr_at(config, epoch)
        epoch_losses = []
        for step, (images, labels) in enumerate(
            _batches(train_handle, stats, config.batch_size, epoch,
                     config.use_augment, aug_rng)
        ):
            row = {"lr": lr}
            s_out = forward_with_taps(student, images)
            if config.mode == "mimkd":
                with T.no_grad():
                    t_out = forward_with_taps(teacher, images)
                bundle = RepresentationBundle(
                    teacher_final=t_out.final,
                    student_final=s_out.final,
                    student_logits=s_out.logits,
                    teacher_logits=t_out.logits,
                    pairs=[(t_out.maps[ti], s_out.maps[sj]) for ti, sj in pairs],
                )
                report = total_loss(bundle, config.weights, labels, critics, bank)
                loss = report.total
                row.update(total=float(loss.data), ce=report.ce,
                           global_mi=report.global_mi, local_mi=report.local_mi,
                           feature_mi=report.feature_mi)
            elif config.mode == "kd":
                with T.no_grad():
                    t_out = forward_with_taps(teacher, images)
                loss = kd_baseline_loss(s_out.logits, t_out.logits, labels,
                                        config.kd_alpha, config.kd_temperature)
                ce = nn.cross_entropy(s_out.logits, labels)
                row.update(total=float(loss.data), ce=float(ce.data))
            else:
                loss = nn.cross_entropy(s_out.logits, labels)
                row.update(ce=float(loss.data))
            if not np.isfinite(loss.data):
                raise FloatingPointError(f"non-finite loss at epoch {epoch} step {step}")
            loss.backward()
            T.sgd_step(params, lr, config.momentum, config.weight_decay)
            epoch_losses.append(float(loss.data))
            if metrics:
                row["test_acc"] = 0.0
                metrics.write(run_id, "train", epoch, step, row)
        acc = evaluate(student, test_handle, stats)
        record.epochs.append(
            (epoch, {"loss": float(np.mean(epoch_losses))}, acc, time.time() - t0)
        )
        record.best_acc = max(record.best_acc, acc)
        record.final_acc = acc
        if metrics:
            evalrow = {c: 0.0 for c in columns}
            evalrow.update(lr=lr, test_acc=acc)
            metrics.write(run_id, "eval", epoch, 0, evalrow)
    if out_dir:
        path = os.path.join(out_dir, "student.ckpt")
        arrays = _model_arrays(student, "student")
        for k, p in critics.named_parameters():
            arrays[k] = p.value.data
        _save_model(path, arrays)
        record.checkpoint_path = path
    return record


def evaluate_checkpoint(ckpt_path, spec: ConvNetSpec, taps: TapSchedule,
                        handle, stats, role="student") -> float:
    model = build_convnet(spec, np.random.default_rng(0), taps)
    _load_model(model, load_checkpoint(ckpt_path), role)
    return evaluate(model, handle, stats)
