"""Discriminator (critic) architectures producing scores for the MI bounds.

Two families: a stack of 1x1 convolutions scoring each spatial location of a
channel-concatenated pair, and a project-and-dot head scoring vector pairs by
the inner product of learned projections.
"""

from dataclasses import dataclass, field

import numpy as np

from . import nn
from . import tensor as T
from .tensor import Tensor


@dataclass
class CriticConfig:
    hidden: int = 512
    d_proj: int = 128
    # distinct per-pair critics for the feature objective, keyed by pair index
    feature_hidden: dict = field(default_factory=dict)

    def validate(self):
        if self.hidden < 1 or self.d_proj < 1:
            raise ValueError("critic widths must be >= 1")


class ConvolveCritic(nn.Module):
    """Three 1x1 convolutions (hidden filters, ReLU between) to one score map.

    Per-location by construction: no mixing across space or batch.
    """

    def __init__(self, in_channels, hidden, rng):
        self.conv1 = nn.Conv2d(in_channels, hidden, 1, 1, 0, rng)
        self.conv2 = nn.Conv2d(hidden, hidden, 1, 1, 0, rng)
        self.conv3 = nn.Conv2d(hidden, 1, 1, 1, 0, rng)
        self.in_channels = in_channels

    def __call__(self, x):
        h = T.relu(self.conv1(x))
        h = T.relu(self.conv2(h))
        return self.conv3(h)


def convolve_scores(teacher_part, student_part, critic: ConvolveCritic):
    """Concatenate along channels and score every spatial location."""
    if teacher_part.shape[2:] != student_part.shape[2:]:
        raise ValueError(
            f"spatial mismatch: teacher {teacher_part.shape[2:]} vs student {student_part.shape[2:]}"
        )
    joined = T.concat([teacher_part, student_part], axis=1)
    return critic(joined)


class _VectorProjection(nn.Module):
    """LL+ReLU+LL main branch plus LL+ReLU shortcut, summed, then layer norm."""

    def __init__(self, din, hidden, d_proj, rng):
        self.main1 = nn.Linear(din, hidden, rng)
        self.main2 = nn.Linear(hidden, d_proj, rng)
        self.shortcut = nn.Linear(din, d_proj, rng)
        self.norm = nn.LayerNorm(d_proj)

    def __call__(self, x):
        o1 = self.main2(T.relu(self.main1(x)))
        o2 = T.relu(self.shortcut(x))
        return self.norm(o1 + o2)


class ProjectDotCritic(nn.Module):
    """Untied per-side projections; score = scaled dot product of projections.

    The dot is divided by sqrt(d_proj) so score variance stays O(1) under the
    layer-normalized projections regardless of the projection width.
    """

    def __init__(self, d_teacher, d_student, hidden, d_proj, rng):
        self.teacher_proj = _VectorProjection(d_teacher, hidden, d_proj, rng)
        self.student_proj = _VectorProjection(d_student, hidden, d_proj, rng)
        self.d_proj = d_proj
        self.score_scale = d_proj ** -0.5

    def project_teacher(self, vec):
        return self.teacher_proj(vec)

    def project_student(self, vec):
        return self.student_proj(vec)


def project_dot_scores(teacher_vec, student_vec, critic: ProjectDotCritic):
    """Full score matrix [N, B]; the diagonal holds aligned-pair scores."""
    pt = critic.project_teacher(teacher_vec)
    ps = critic.project_student(student_vec)
    return T.matmul(pt, T.transpose(ps, (1, 0))) * critic.score_scale


def replicate_spatial(vec, m):
    """Tile a [N, d] vector into an [N, d, m, m] map, every location identical."""
    if m < 1:
        raise ValueError("spatial size must be >= 1")
    n, d = vec.shape
    return T.broadcast_to(T.reshape(vec, n, d, 1, 1), (n, d, m, m))
