"""Pairing of intermediate maps, negative generation, the memory bank, and
the four-term distillation loss (cross-entropy plus global/local/feature MI
bounds to maximize).
"""

from dataclasses import dataclass, field

import numpy as np

from . import nn
from . import tensor as T
from .critics import ConvolveCritic, ProjectDotCritic, convolve_scores, replicate_spatial
from .estimators import TWO_LN2, MiEstimate, ScoreSet, infonce_lower_bound, jsd_lower_bound
from .tensor import Tensor


@dataclass
class RepresentationBundle:
    """One forward pass's taps from both networks.

    `pairs` holds the K same-spatial-size (teacher_map, student_map) tuples;
    final representations are kept out of it.
    """

    teacher_final: Tensor  # [N, d_t], detached
    student_final: Tensor  # [N, d_s]
    student_logits: Tensor  # [N, num_classes]
    teacher_logits: Tensor  # [N, num_classes], detached
    pairs: list  # [(Tensor[N,Ct,m,m], Tensor[N,Cs,m,m]), ...]


@dataclass
class LossWeights:
    alpha: float = 1.0
    lambda_g: float = 1.0
    lambda_l: float = 0.75
    lambda_f: float = 1.0

    def validate(self):
        if min(self.alpha, self.lambda_g, self.lambda_l, self.lambda_f) < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass
class LossReport:
    total: Tensor
    ce: float
    global_mi: float
    local_mi: float
    feature_mi: float


class MemoryBank:
    """FIFO queue of detached embeddings used as contrastive negatives."""

    def __init__(self, capacity=4096, dim=128):
        self.capacity = capacity
        self.dim = dim
        self._store = np.zeros((capacity, dim), dtype=np.float32)
        self._size = 0
        self._cursor = 0

    def __len__(self):
        return self._size

    def push(self, entries):
        entries = np.asarray(entries, dtype=np.float32)
        if entries.ndim != 2 or entries.shape[1] != self.dim:
            raise ValueError(f"bank expects [n, {self.dim}] entries, got {entries.shape}")
        for row in entries:
            self._store[self._cursor] = row
            self._cursor = (self._cursor + 1) % self.capacity
            self._size = min(self._size + 1, self.capacity)

    def entries(self):
        """Current contents oldest-first; carries no gradient."""
        if self._size < self.capacity:
            return self._store[: self._size].copy()
        return np.roll(self._store, -self._cursor, axis=0).copy()


def bank_update_and_sample(bank: MemoryBank, new_entries, want: int):
    """FIFO-push detached entries, then return the whole bank as negatives.

    Sampling is deterministic: the entire bank is returned (capped only by
    its size); an empty result signals the caller to fall back to in-batch
    negatives.
    """
    bank.push(new_entries)
    out = bank.entries()
    if want < len(out):
        out = out[-want:]
    return out


def build_pairing_set(teacher_taps, student_taps):
    """Greedy in-order matching of taps by equal spatial size.

    Both lists must be ordered shallow to deep; each tap is used at most
    once. Channel counts are free to differ. Returns (teacher_idx,
    student_idx) pairs.
    """
    pairs = []
    j = 0
    for i, tmap in enumerate(teacher_taps):
        tsize = tmap.shape[2:]
        for jj in range(j, len(student_taps)):
            if student_taps[jj].shape[2:] == tsize:
                pairs.append((i, jj))
                j = jj + 1
                break
    if not pairs:
        sizes_t = [m.shape[2] for m in teacher_taps]
        sizes_s = [m.shape[2] for m in student_taps]
        raise ValueError(
            f"no same-sized tap pairs between teacher {sizes_t} and student {sizes_s}; "
            "reconfigure the tap schedules"
        )
    return pairs


def shift_negatives(batch):
    """Cyclic shift pairing each row with the next sample; no fixed points."""
    n = batch.shape[0]
    if n < 2:
        raise ValueError("shift_negatives needs a batch of at least 2")
    return T.roll(batch, -1, axis=0)


@dataclass
class CriticSet(nn.Module):
    """All distillation critics; feature critics are keyed by pair index."""

    global_critic: ProjectDotCritic = None
    local_critic: ConvolveCritic = None
    feature_critics: dict = field(default_factory=dict)

    def named_parameters(self, prefix="critic"):
        if self.global_critic is not None:
            yield from self.global_critic.named_parameters(f"{prefix}.global")
        if self.local_critic is not None:
            yield from self.local_critic.named_parameters(f"{prefix}.local")
        for k in sorted(self.feature_critics):
            yield from self.feature_critics[k].named_parameters(f"{prefix}.feat.k{k}")

    def parameters(self):
        return [p for _, p in self.named_parameters()]


def global_objective(bundle: RepresentationBundle, critic: ProjectDotCritic,
                     bank: MemoryBank) -> MiEstimate:
    """Contrastive bound between final representations, bank as negatives.

    While the bank is empty the in-batch cyclic shifts of the teacher
    projections stand in as negatives. Detached teacher projections are
    pushed afterwards.
    """
    pt = critic.project_teacher(bundle.teacher_final)
    ps = critic.project_student(bundle.student_final)
    scale = critic.score_scale
    positive = T.tsum(ps * pt, axis=1) * scale
    stored = bank.entries()
    if len(stored):
        negatives = T.matmul(ps, T.transpose(Tensor(stored), (1, 0))) * scale
    else:
        n = ps.shape[0]
        cols = [T.reshape(T.tsum(ps * T.roll(pt, -s, axis=0), axis=1), n, 1)
                for s in range(1, n)]
        negatives = T.concat(cols, axis=1) * scale
    est = infonce_lower_bound(positive, negatives)
    bank.push(pt.data)
    return est


def local_objective(bundle: RepresentationBundle, critic: ConvolveCritic) -> MiEstimate:
    """JSD bound between the teacher's final vector and every location of the
    student's deepest intermediate map, one shifted negative per positive."""
    if not bundle.pairs:
        raise ValueError("local objective needs a nonempty pairing set")
    _, student_map = bundle.pairs[-1]
    n = student_map.shape[0]
    if n < 2:
        raise ValueError("local objective needs batch >= 2 for a negative")
    m = student_map.shape[2]
    pos_teacher = replicate_spatial(bundle.teacher_final, m)
    neg_teacher = replicate_spatial(shift_negatives(bundle.teacher_final), m)
    pos = T.reshape(convolve_scores(pos_teacher, student_map, critic), n * m * m)
    neg = T.reshape(convolve_scores(neg_teacher, student_map, critic), n * m * m, 1)
    return jsd_lower_bound(ScoreSet(pos, neg))


def feature_objective(bundle: RepresentationBundle, critics: dict) -> MiEstimate:
    """Per-pair JSD bounds on region-consistent vectors, averaged over pairs."""
    if not bundle.pairs:
        raise ValueError("feature objective needs a nonempty pairing set")
    raws = []
    for k, (teacher_map, student_map) in enumerate(bundle.pairs):
        n, _, m, _ = student_map.shape
        if n < 2:
            raise ValueError("feature objective needs batch >= 2 for a negative")
        critic = critics[k]
        pos = T.reshape(convolve_scores(teacher_map, student_map, critic), n * m * m)
        neg_teacher = shift_negatives(teacher_map)
        neg = T.reshape(convolve_scores(neg_teacher, student_map, critic), n * m * m, 1)
        raws.append(jsd_lower_bound(ScoreSet(pos, neg)).raw_bound)
    raw = raws[0]
    for r in raws[1:]:
        raw = raw + r
    raw = raw * (1.0 / len(raws))
    return MiEstimate(raw, raw + TWO_LN2, "jsd")


def total_loss(bundle: RepresentationBundle, weights: LossWeights, labels,
               critics: CriticSet, bank: MemoryBank) -> LossReport:
    """Weighted sum: alpha * CE minus the weighted MI bounds.

    Objectives with zero weight are skipped entirely (reported as 0), which
    keeps the zero-weight corner bit-identical to plain CE training.
    """
    weights.validate()
    ce = nn.cross_entropy(bundle.student_logits, labels)
    total = weights.alpha * ce
    g_val = l_val = f_val = 0.0
    if weights.lambda_g:
        g = global_objective(bundle, critics.global_critic, bank)
        total = total - weights.lambda_g * g.raw_bound
        g_val = g.raw
    if weights.lambda_l:
        l = local_objective(bundle, critics.local_critic)
        total = total - weights.lambda_l * l.raw_bound
        l_val = l.raw
    if weights.lambda_f:
        f = feature_objective(bundle, critics.feature_critics)
        total = total - weights.lambda_f * f.raw_bound
        f_val = f.raw
    return LossReport(total, float(ce.data), g_val, l_val, f_val)


def kd_baseline_loss(student_logits, teacher_logits, labels,
                     alpha=0.9, temperature=4.0):
    """Soft-label distillation: alpha*CE + (1-alpha)*tau^2*KL(teacher||student)."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    ce = nn.cross_entropy(student_logits, labels)
    tau = float(temperature)
    logp_t = T.log_softmax(teacher_logits * (1.0 / tau), axis=1).data
    p_t = np.exp(logp_t)
    logp_s = T.log_softmax(student_logits * (1.0 / tau), axis=1)
    kl = T.tmean(T.tsum(Tensor(p_t * logp_t) - Tensor(p_t) * logp_s, axis=1))
    return alpha * ce + (1.0 - alpha) * tau * tau * kl
