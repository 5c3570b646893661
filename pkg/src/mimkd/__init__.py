"""Mutual-information maximization knowledge distillation, desk scale."""

from .tensor import Tensor, Parameter, no_grad, set_default_dtype, use_dtype
from .estimators import (
    GaussianPairSpec,
    MiEstimate,
    ScoreSet,
    analytic_gaussian_mi,
    estimate_mi_synthetic,
    infonce_lower_bound,
    jsd_lower_bound,
    sample_gaussian_pair,
)
from .critics import ConvolveCritic, CriticConfig, ProjectDotCritic
from .objectives import LossWeights, MemoryBank, RepresentationBundle
from .models import ConvNetSpec, TapSchedule, build_convnet, forward_with_taps
from .trainer import TrainConfig, distill, evaluate, lr_at, train_teacher

__version__ = "0.1.0"
