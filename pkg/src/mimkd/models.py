"""Shallow four-block CNN family with named intermediate taps.

Two block styles: stride-2 convolutions, or stride-1 convolutions followed
by 2x2 max pooling. Both end in global average pooling and a linear
classifier. Taps expose post-activation block outputs for the pairing set.
"""

from dataclasses import dataclass, field

import numpy as np

from . import nn
from . import tensor as T


@dataclass
class ConvNetSpec:
    style: str = "stride2"  # stride2 | maxpool
    widths: tuple = (8, 16, 32, 64)
    num_classes: int = 8
    input_shape: tuple = (3, 32, 32)

    def validate(self):
        if self.style not in ("stride2", "maxpool"):
            raise ValueError(f"unknown block style {self.style!r}")
        if len(self.widths) != 4 or min(self.widths) < 1:
            raise ValueError("spec needs 4 block widths >= 1")
        if self.input_shape[1] < 16 or self.input_shape[2] < 16:
            raise ValueError("input too small for 4 spatial halvings")


@dataclass
class TapSchedule:
    """Block indices (1-based) whose outputs feed the pairing set."""

    blocks: tuple = (2, 3, 4)

    def validate(self):
        if not self.blocks or any(b < 1 or b > 4 for b in self.blocks):
            raise ValueError("tap blocks must be within 1..4")
        if list(self.blocks) != sorted(self.blocks):
            raise ValueError("tap blocks must be ordered shallow to deep")


class _ConvBlock(nn.Module):
    def __init__(self, cin, cout, style, rng):
        stride = 2 if style == "stride2" else 1
        self.conv = nn.Conv2d(cin, cout, 3, stride, 1, rng)
        self.bn = nn.BatchNorm2d(cout)
        self.pool = style == "maxpool"

    def __call__(self, x):
        h = T.relu(self.bn(self.conv(x)))
        if self.pool:
            h = T.maxpool2d(h, 2, 2)
        return h


class ConvNet(nn.Module):
    def __init__(self, spec: ConvNetSpec, rng, taps: TapSchedule = None):
        spec.validate()
        self.spec = spec
        self.taps = taps or TapSchedule()
        self.taps.validate()
        widths = spec.widths
        cin = spec.input_shape[0]
        self.blocks = [
            _ConvBlock(cin, widths[0], spec.style, rng),
            _ConvBlock(widths[0], widths[1], spec.style, rng),
            _ConvBlock(widths[1], widths[2], spec.style, rng),
            _ConvBlock(widths[2], widths[3], spec.style, rng),
        ]
        self.classifier = nn.Linear(widths[3], spec.num_classes, rng)

    @property
    def feature_dim(self):
        return self.spec.widths[3]

    def num_parameters(self):
        return sum(p.value.size for p in self.parameters())


@dataclass
class NetworkTaps:
    """One network's side of a forward pass."""

    final: object  # pooled pre-classifier vector [N, d]
    logits: object  # [N, num_classes]
    maps: list = field(default_factory=list)  # tapped block outputs, shallow to deep


def build_convnet(spec: ConvNetSpec, rng, taps: TapSchedule = None) -> ConvNet:
    return ConvNet(spec, rng, taps)


def forward_with_taps(model: ConvNet, images) -> NetworkTaps:
    """Run the network, collecting tapped maps and the pooled final vector."""
    c, h, w = model.spec.input_shape
    if images.shape[1:] != (c, h, w):
        raise ValueError(
            f"input shape {images.shape[1:]} does not match spec {(c, h, w)}"
        )
    maps = []
    x = images
    for i, block in enumerate(model.blocks, start=1):
        x = block(x)
        if i in model.taps.blocks:
            maps.append(x)
    final = T.avgpool2d_global(x)
    logits = model.classifier(final)
    return NetworkTaps(final=final, logits=logits, maps=maps)


def set_eval(model):
    nn.set_training(model, False)


def set_train(model):
    nn.set_training(model, True)
