"""Layer containers built on the tensor engine.

Modules are plain parameter holders: `named_parameters` walks attributes
recursively so optimizers and checkpoints see one flat dotted-name registry.
"""

import numpy as np

from . import tensor as T
from .tensor import Parameter, Tensor


def kaiming_uniform(rng, shape, fan_in):
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Module:
    def _children(self):
        for name, attr in vars(self).items():
            if isinstance(attr, (Parameter, Module)):
                yield name, attr
            elif isinstance(attr, (list, tuple)):
                for i, item in enumerate(attr):
                    if isinstance(item, (Parameter, Module)):
                        yield f"{name}.{i}", item

    def named_parameters(self, prefix=""):
        for name, attr in self._children():
            full = f"{prefix}.{name}" if prefix else name
            if isinstance(attr, Parameter):
                yield full, attr
            else:
                yield from attr.named_parameters(full)

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix=""):
        for name, attr in vars(self).items():
            full = f"{prefix}.{name}" if prefix else name
            if isinstance(attr, np.ndarray):
                yield full, attr
            elif isinstance(attr, Module):
                yield from attr.named_buffers(full)
            elif isinstance(attr, (list, tuple)):
                for i, item in enumerate(attr):
                    if isinstance(item, Module):
                        yield from item.named_buffers(f"{full}.{i}")

    def state_arrays(self):
        """Dotted name -> numpy array view for every parameter and buffer."""
        out = {}
        for name, p in self.named_parameters():
            out[name] = p.value.data
        for name, b in self.named_buffers():
            out[name] = b
        return out

    def load_state(self, arrays):
        own = self.state_arrays()
        missing = set(own) - set(arrays)
        extra = set(arrays) - set(own)
        if missing or extra:
            raise ValueError(f"state mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for name, dst in own.items():
            src = np.asarray(arrays[name])
            if src.shape != dst.shape:
                raise ValueError(f"shape mismatch for {name}: {src.shape} vs {dst.shape}")
            dst[...] = src.astype(dst.dtype)


class Linear(Module):
    def __init__(self, din, dout, rng):
        self.weight = Parameter(kaiming_uniform(rng, (dout, din), din))
        self.bias = Parameter(np.zeros(dout), decay=False)

    def __call__(self, x):
        return T.linear(x, self.weight.value, self.bias.value)


class Conv2d(Module):
    def __init__(self, cin, cout, kernel, stride, padding, rng):
        fan_in = cin * kernel * kernel
        self.weight = Parameter(kaiming_uniform(rng, (cout, cin, kernel, kernel), fan_in))
        self.bias = Parameter(np.zeros(cout), decay=False)
        self.stride = stride
        self.padding = padding

    def __call__(self, x):
        return T.conv2d(x, self.weight.value, self.bias.value, self.stride, self.padding)


class BatchNorm2d(Module):
    def __init__(self, channels):
        self.gamma = Parameter(np.ones(channels), decay=False)
        self.beta = Parameter(np.zeros(channels), decay=False)
        self.running_mean = np.zeros(channels, dtype=np.float32)
        self.running_var = np.ones(channels, dtype=np.float32)
        self.training = True

    def __call__(self, x):
        return T.batch_norm2d(
            x, self.gamma.value, self.beta.value,
            self.running_mean, self.running_var, self.training,
        )


class LayerNorm(Module):
    def __init__(self, dim):
        self.gamma = Parameter(np.ones(dim), decay=False)
        self.beta = Parameter(np.zeros(dim), decay=False)

    def __call__(self, x):
        return T.layer_norm(x, self.gamma.value, self.beta.value)


def set_training(module, flag):
    """Flip train/eval mode on every BatchNorm in the tree."""
    if isinstance(module, BatchNorm2d):
        module.training = flag
    for _, child in module._children():
        if isinstance(child, Module):
            set_training(child, flag)


def cross_entropy(logits, labels):
    """Mean cross-entropy of integer labels against logits [N, num_classes]."""
    labels = np.asarray(labels, dtype=np.int64)
    n, num_classes = logits.shape
    if labels.min() < 0 or labels.max() >= num_classes:
        raise ValueError(
            f"labels must be in [0, {num_classes}), got range [{labels.min()}, {labels.max()}]"
        )
    logp = T.log_softmax(logits, axis=1)
    return -T.take_rows(logp, labels).mean()
