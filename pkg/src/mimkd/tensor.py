"""Minimal reverse-mode autodiff engine on top of numpy.

Tensors wrap contiguous numpy arrays and record a tape of closures when
gradients are enabled. `backward` on a scalar root walks the tape in
reverse topological order and accumulates gradients (+=) into every
reachable leaf with requires_grad set.
"""

import contextlib
import threading

import numpy as np

_state = threading.local()


def _default_dtype():
    return getattr(_state, "dtype", np.float32)


def set_default_dtype(dtype):
    """Set the dtype new tensors are created with (f32 default, f64 for strict tests)."""
    _state.dtype = np.dtype(dtype)


def get_default_dtype():
    return np.dtype(_default_dtype())


def _grad_enabled():
    return getattr(_state, "grad_enabled", True)


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block (teacher/eval forward passes)."""
    prev = _grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


@contextlib.contextmanager
def use_dtype(dtype):
    prev = get_default_dtype()
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(prev)


def _unbroadcast(grad, shape):
    # Sum out axes that numpy broadcasting introduced or stretched.
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """N-dimensional array participating in the autodiff tape."""

    __slots__ = ("data", "grad", "requires_grad", "_backward", "_prev")

    def __init__(self, data, requires_grad=False):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=_default_dtype())
        self.data = arr if arr.flags["C_CONTIGUOUS"] else np.ascontiguousarray(arr)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._backward = None
        self._prev = ()

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def item(self):
        return self.data.item()

    def detach(self):
        return Tensor(self.data.copy())

    def zero_grad(self):
        self.grad = None

    # -- tape machinery ----------------------------------------------------

    def _accum(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self):
        """Populate grads of every reachable requires_grad tensor.

        The root must be a scalar (size-1) tensor.
        """
        if self.data.size != 1:
            raise ValueError(
                f"backward root must be scalar, got shape {self.shape}"
            )
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._prev:
                if id(p) not in visited:
                    stack.append((p, False))
        self._accum(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operators ---------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, -_as_tensor(other))

    def __rsub__(self, other):
        return add(_as_tensor(other), -self)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor/tensor division not supported; multiply by reciprocal")
        return mul(self, 1.0 / other)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        return reshape(self, *shape)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def transpose(self, *axes):
        return transpose(self, axes if axes else None)

    @property
    def T(self):
        return transpose(self, None)


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward):
    out = Tensor(data)
    if _grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._prev = tuple(parents)
        out._backward = backward
    return out


# -- elementwise and linear-algebra ops -----------------------------------


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g, b.shape))

    return _make(data, (a, b), backward)


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g * a.data, b.shape))

    return _make(data, (a, b), backward)


def matmul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            a._accum(g @ b.data.swapaxes(-1, -2))
        if b.requires_grad:
            b._accum(a.data.swapaxes(-1, -2) @ g)

    return _make(data, (a, b), backward)


def reshape(a, *shape):
    a = _as_tensor(a)
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])
    old = a.shape
    data = a.data.reshape(shape)

    def backward(g):
        a._accum(g.reshape(old))

    return _make(data, (a,), backward)


def transpose(a, axes=None):
    a = _as_tensor(a)
    data = np.transpose(a.data, axes)
    inv = None if axes is None else np.argsort(axes)

    def backward(g):
        a._accum(np.transpose(g, inv))

    return _make(data, (a,), backward)


def concat(tensors, axis=0):
    tensors = [_as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        pieces = np.split(g, splits, axis=axis)
        for t, piece in zip(tensors, pieces):
            if t.requires_grad:
                t._accum(piece)

    return _make(data, tuple(tensors), backward)


def roll(a, shift, axis=0):
    a = _as_tensor(a)
    data = np.roll(a.data, shift, axis=axis)

    def backward(g):
        a._accum(np.roll(g, -shift, axis=axis))

    return _make(data, (a,), backward)


def broadcast_to(a, shape):
    a = _as_tensor(a)
    data = np.broadcast_to(a.data, shape).copy()

    def backward(g):
        a._accum(_unbroadcast(g, a.shape))

    return _make(data, (a,), backward)


def tsum(a, axis=None, keepdims=False):
    a = _as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accum(np.broadcast_to(g, a.shape).copy())

    return _make(data, (a,), backward)


def tmean(a, axis=None, keepdims=False):
    a = _as_tensor(a)
    n = a.data.size if axis is None else np.prod(
        [a.shape[ax] for ax in (axis if isinstance(axis, tuple) else (axis,))]
    )
    return tsum(a, axis=axis, keepdims=keepdims) * (1.0 / float(n))


def square(a):
    return mul(a, a)


def texp(a):
    a = _as_tensor(a)
    data = np.exp(a.data)

    def backward(g):
        a._accum(g * data)

    return _make(data, (a,), backward)


def tlog(a):
    a = _as_tensor(a)
    data = np.log(a.data)

    def backward(g):
        a._accum(g / a.data)

    return _make(data, (a,), backward)


def relu(a):
    a = _as_tensor(a)
    data = np.maximum(a.data, 0)

    def backward(g):
        a._accum(g * (a.data > 0))

    return _make(data, (a,), backward)


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softplus(a):
    """Overflow-safe softplus: max(x, 0) + log1p(exp(-|x|))."""
    a = _as_tensor(a)
    x = a.data
    data = np.maximum(x, 0) + np.log1p(np.exp(-np.abs(x)))

    def backward(g):
        a._accum(g * _sigmoid(x))

    return _make(data, (a,), backward)


def log_softmax(a, axis=-1):
    a = _as_tensor(a)
    x = a.data
    shifted = x - x.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    data = shifted - lse
    sm = np.exp(data)

    def backward(g):
        a._accum(g - sm * g.sum(axis=axis, keepdims=True))

    return _make(data, (a,), backward)


def logsumexp(a, axis=-1):
    a = _as_tensor(a)
    x = a.data
    m = x.max(axis=axis, keepdims=True)
    s = np.exp(x - m).sum(axis=axis, keepdims=True)
    data = (m + np.log(s)).squeeze(axis)
    sm = np.exp(x - m) / s

    def backward(g):
        a._accum(np.expand_dims(g, axis) * sm)

    return _make(data, (a,), backward)


def slice_axis0(a, start, stop):
    """Contiguous slice along the leading axis."""
    a = _as_tensor(a)
    data = a.data[start:stop]

    def backward(g):
        full = np.zeros_like(a.data)
        full[start:stop] = g
        a._accum(full)

    return _make(data, (a,), backward)


def take_rows(a, idx):
    """Select a[range(N), idx] from a 2-d tensor (label gather for cross-entropy)."""
    a = _as_tensor(a)
    idx = np.asarray(idx, dtype=np.int64)
    rows = np.arange(a.shape[0])
    data = a.data[rows, idx]

    def backward(g):
        full = np.zeros_like(a.data)
        full[rows, idx] = g
        a._accum(full)

    return _make(data, (a,), backward)


# -- convolution and pooling ----------------------------------------------


def _im2col(x, kh, kw, stride, padding):
    n, c, h, w = x.shape
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    hp, wp = x.shape[2], x.shape[3]
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    cols = np.empty((n, c, kh, kw, ho, wo), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = x[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride]
    return cols.reshape(n, c * kh * kw, ho * wo), ho, wo


def _col2im(cols, x_shape, kh, kw, stride, padding, ho, wo):
    n, c, h, w = x_shape
    hp, wp = h + 2 * padding, w + 2 * padding
    out = np.zeros((n, c, hp, wp), dtype=cols.dtype)
    cols = cols.reshape(n, c, kh, kw, ho, wo)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += cols[:, :, i, j]
    if padding:
        out = out[:, :, padding : padding + h, padding : padding + w]
    return out


def conv2d(x, weight, bias=None, stride=1, padding=0):
    """2-d cross-correlation over NCHW input with OIHW weights."""
    x, weight = _as_tensor(x), _as_tensor(weight)
    n, cin, h, w = x.shape
    cout, cin_w, kh, kw = weight.shape
    if cin != cin_w:
        raise ValueError(
            f"conv2d channel mismatch: input has {cin} channels, weight expects {cin_w}"
        )
    if kh > h + 2 * padding or kw > w + 2 * padding:
        raise ValueError(
            f"conv2d kernel {kh}x{kw} larger than padded input {h + 2 * padding}x{w + 2 * padding}"
        )
    if stride < 1:
        raise ValueError("conv2d stride must be >= 1")
    cols, ho, wo = _im2col(x.data, kh, kw, stride, padding)
    wmat = weight.data.reshape(cout, cin * kh * kw)
    out = np.einsum("ok,nkl->nol", wmat, cols, optimize=True)
    if bias is not None:
        bias = _as_tensor(bias)
        out = out + bias.data.reshape(1, cout, 1)
    out = out.reshape(n, cout, ho, wo)
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        gmat = g.reshape(n, cout, ho * wo)
        if bias is not None and bias.requires_grad:
            bias._accum(gmat.sum(axis=(0, 2)))
        if weight.requires_grad:
            gw = np.einsum("nol,nkl->ok", gmat, cols, optimize=True)
            weight._accum(gw.reshape(weight.shape))
        if x.requires_grad:
            gcols = np.einsum("ok,nol->nkl", wmat, gmat, optimize=True)
            x._accum(_col2im(gcols, x.shape, kh, kw, stride, padding, ho, wo))

    return _make(out, parents, backward)


def maxpool2d(x, kernel, stride=None):
    x = _as_tensor(x)
    stride = stride or kernel
    n, c, h, w = x.shape
    if kernel > h or kernel > w:
        raise ValueError(f"maxpool2d kernel {kernel} larger than input {h}x{w}")
    ho = (h - kernel) // stride + 1
    wo = (w - kernel) // stride + 1
    cols, ho, wo = _im2col(x.data, kernel, kernel, stride, 0)
    cols = cols.reshape(n, c, kernel * kernel, ho * wo)
    arg = cols.argmax(axis=2)
    out = np.take_along_axis(cols, arg[:, :, None, :], axis=2).squeeze(2)
    out = out.reshape(n, c, ho, wo)

    def backward(g):
        gcols = np.zeros((n, c, kernel * kernel, ho * wo), dtype=g.dtype)
        np.put_along_axis(gcols, arg[:, :, None, :], g.reshape(n, c, 1, ho * wo), axis=2)
        x._accum(
            _col2im(gcols.reshape(n, c * kernel * kernel, ho * wo), x.shape, kernel, kernel, stride, 0, ho, wo)
        )

    return _make(out, (x,), backward)


def avgpool2d_global(x):
    x = _as_tensor(x)
    n, c, h, w = x.shape
    return tmean(reshape(x, n, c, h * w), axis=2)


# -- normalization layers (functional forms) ------------------------------

BN_EPS = 1e-5
LN_EPS = 1e-5


def batch_norm2d(x, gamma, beta, running_mean, running_var, training, momentum=0.1):
    """Per-channel batch norm over (N, H, W). Mutates running stats in train mode."""
    x, gamma, beta = _as_tensor(x), _as_tensor(gamma), _as_tensor(beta)
    n, c, h, w = x.shape
    if training:
        if n * h * w < 2:
            raise ValueError("batch_norm2d train mode needs at least 2 values per channel")
        mean = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))
        running_mean *= 1 - momentum
        running_mean += momentum * mean
        m = n * h * w
        running_var *= 1 - momentum
        running_var += momentum * var * (m / max(m - 1, 1))
    else:
        mean, var = running_mean, running_var
    std = np.sqrt(var + BN_EPS)
    xhat = (x.data - mean[None, :, None, None]) / std[None, :, None, None]
    out = gamma.data[None, :, None, None] * xhat + beta.data[None, :, None, None]

    def backward(g):
        if beta.requires_grad:
            beta._accum(g.sum(axis=(0, 2, 3)))
        if gamma.requires_grad:
            gamma._accum((g * xhat).sum(axis=(0, 2, 3)))
        if x.requires_grad:
            gs = g * gamma.data[None, :, None, None]
            if training:
                m = n * h * w
                gmean = gs.mean(axis=(0, 2, 3), keepdims=True)
                gxhat = (gs * xhat).mean(axis=(0, 2, 3), keepdims=True)
                gx = (gs - gmean - xhat * gxhat) / std[None, :, None, None]
            else:
                gx = gs / std[None, :, None, None]
            x._accum(gx)

    return _make(out, (x, gamma, beta), backward)


def layer_norm(x, gamma, beta):
    """Normalize over the last axis then apply the affine pair."""
    x, gamma, beta = _as_tensor(x), _as_tensor(gamma), _as_tensor(beta)
    d = x.shape[-1]
    if d < 2:
        raise ValueError("layer_norm needs last dim >= 2")
    mean = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    std = np.sqrt(var + LN_EPS)
    xhat = (x.data - mean) / std
    out = gamma.data * xhat + beta.data

    def backward(g):
        if beta.requires_grad:
            beta._accum(g.reshape(-1, d).sum(axis=0))
        if gamma.requires_grad:
            gamma._accum((g * xhat).reshape(-1, d).sum(axis=0))
        if x.requires_grad:
            gs = g * gamma.data
            gmean = gs.mean(axis=-1, keepdims=True)
            gxhat = (gs * xhat).mean(axis=-1, keepdims=True)
            x._accum((gs - gmean - xhat * gxhat) / std)

    return _make(out, (x, gamma, beta), backward)


def linear(x, weight, bias=None):
    """Affine map y = x @ W.T + b with weight shaped [Dout, Din]."""
    x, weight = _as_tensor(x), _as_tensor(weight)
    if x.shape[-1] != weight.shape[1]:
        raise ValueError(
            f"linear dimension mismatch: input dim {x.shape[-1]}, weight expects {weight.shape[1]}"
        )
    out = matmul(x, transpose(weight, None))
    if bias is not None:
        out = add(out, bias)
    return out


# -- parameters and optimizer ---------------------------------------------


class Parameter:
    """Trainable tensor plus SGD momentum state."""

    __slots__ = ("value", "momentum_buffer", "decay")

    def __init__(self, data, decay=True):
        self.value = Tensor(data, requires_grad=True)
        self.momentum_buffer = np.zeros_like(self.value.data)
        self.decay = bool(decay)

    @property
    def data(self):
        return self.value.data

    @property
    def grad(self):
        return self.value.grad

    @property
    def shape(self):
        return self.value.shape


def sgd_step(params, lr, momentum=0.0, weight_decay=0.0):
    """In-place SGD with momentum; zeroes grads afterwards.

    Weight decay is skipped for parameters flagged decay=False
    (norm-layer affines and biases).
    """
    for p in params:
        if p.value.grad is None:
            raise ValueError("sgd_step: parameter has no gradient")
    for p in params:
        g = p.value.grad
        if weight_decay and p.decay:
            g = g + weight_decay * p.value.data
        p.momentum_buffer *= momentum
        p.momentum_buffer += g
        p.value.data -= (lr * p.momentum_buffer).astype(p.value.data.dtype)
        p.value.grad = None


# -- gradient checking oracle ---------------------------------------------


def finite_difference_grad(fn, x, eps=1e-6):
    """Central-difference gradient of scalar fn(Tensor) w.r.t. x.

    Always evaluated in float64 so the small step neither loses precision
    nor hops across relu/max kinks; the result approximates the true
    gradient regardless of the dtype under test.
    """
    x = np.asarray(x, dtype=np.float64).copy()
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    with use_dtype(np.float64):
        for i in range(flat.size):
            orig = flat[i]
            step = eps * max(1.0, abs(float(orig)))
            flat[i] = orig + step
            fp = float(fn(Tensor(x)).data)
            flat[i] = orig - step
            fm = float(fn(Tensor(x)).data)
            flat[i] = orig
            gflat[i] = (fp - fm) / (2 * step)
    return grad


def check_gradient(fn, x):
    """Max relative error between the tape gradient (current dtype) of the
    scalar fn and a float64 central-difference oracle."""
    x = np.asarray(x, dtype=get_default_dtype())
    xt = Tensor(x.copy(), requires_grad=True)
    out = fn(xt)
    out.backward()
    analytic = xt.grad.astype(np.float64)
    numeric = finite_difference_grad(fn, x.astype(np.float64))
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), 1.0)
    return float(np.max(np.abs(analytic - numeric) / denom))
