"""Randomized finite-difference checks for every differentiable op.

Each op runs over >= 20 seeds in both precisions: rel. error < 1e-3 in f32
and < 1e-6 in f64.
"""

import numpy as np
import pytest

from mimkd import tensor as T
from mimkd.estimators import ScoreSet, infonce_lower_bound, jsd_lower_bound
from mimkd.tensor import Tensor, check_gradient

SEEDS = range(20)
TOL = {np.dtype(np.float32): 1e-3, np.dtype(np.float64): 1e-6}


def case_add_mul(rng):
    c = rng.standard_normal((3, 4))
    return (lambda t: ((t + Tensor(c)) * t).mean()), (3, 4)


def case_matmul(rng):
    c = rng.standard_normal((4, 3))
    return (lambda t: T.tmean(T.matmul(t, Tensor(c)))), (2, 4)


def case_linear(rng):
    w, b = rng.standard_normal((3, 5)), rng.standard_normal(3)
    return (lambda t: T.tmean(T.linear(t, Tensor(w), Tensor(b)))), (2, 5)


def case_relu(rng):
    return (lambda t: T.relu(t).sum()), (4, 4)


def case_softplus(rng):
    return (lambda t: T.softplus(t).mean()), (8,)


def case_log_softmax(rng):
    c = rng.standard_normal((3, 5))
    return (lambda t: T.tsum(T.log_softmax(t, axis=1) * Tensor(c))), (3, 5)


def case_logsumexp(rng):
    c = rng.standard_normal(3)
    return (lambda t: T.tsum(T.logsumexp(t, axis=1) * Tensor(c))), (3, 6)


def case_exp_log(rng):
    return (lambda t: T.tmean(T.tlog(T.texp(t) + 1.5))), (5,)


def case_conv2d(rng):
    w = rng.standard_normal((4, 3, 3, 3)) * 0.5
    b = rng.standard_normal(4)
    return (lambda t: T.tmean(T.conv2d(t, Tensor(w), Tensor(b), 2, 1))), (2, 3, 8, 8)


def case_conv2d_weight(rng):
    x = rng.standard_normal((2, 2, 6, 6))
    return (lambda t: T.tmean(T.conv2d(Tensor(x), t, None, 1, 0))), (3, 2, 3, 3)


def case_maxpool2d(rng):
    return (lambda t: T.tmean(T.maxpool2d(t, 2, 2))), (2, 2, 6, 6)


def case_avgpool_global(rng):
    c = rng.standard_normal((2, 3))
    return (lambda t: T.tmean(T.avgpool2d_global(t) * Tensor(c))), (2, 3, 4, 4)


def case_batch_norm2d(rng):
    g, b = rng.standard_normal(2), rng.standard_normal(2)

    def fn(t):
        out = T.batch_norm2d(t, Tensor(g), Tensor(b), np.zeros(2), np.ones(2), True)
        return T.tmean(T.square(out + 0.3))

    return fn, (4, 2, 3, 3)


def case_layer_norm(rng):
    g, b = rng.standard_normal(5), rng.standard_normal(5)
    return (
        lambda t: T.tmean(T.square(T.layer_norm(t, Tensor(g), Tensor(b)))),
        (3, 5),
    )


def case_concat_roll_slice(rng):
    c = rng.standard_normal((5, 4))
    return (
        lambda t: T.tmean(
            T.concat([T.roll(t, 1, axis=0), T.slice_axis0(t, 0, 2)], axis=0) * Tensor(c)
        ),
        (3, 4),
    )


def case_broadcast_reshape(rng):
    c = rng.standard_normal((2, 3, 4, 4))
    return (
        lambda t: T.tmean(T.broadcast_to(T.reshape(t, 2, 3, 1, 1), (2, 3, 4, 4)) * Tensor(c)),
        (2, 3),
    )


def case_take_rows(rng):
    idx = rng.integers(0, 4, size=3)
    return (lambda t: T.take_rows(t, idx).mean()), (3, 4)


def _split_scores(t):
    flat = T.reshape(t, 12)
    return T.slice_axis0(flat, 0, 4), T.reshape(T.slice_axis0(flat, 4, 12), 4, 2)


def case_jsd_bound(rng):
    def fn(t):
        pos, neg = _split_scores(t)
        return jsd_lower_bound(ScoreSet(pos, neg)).raw_bound

    return fn, (3, 4)


def case_infonce_bound(rng):
    def fn(t):
        pos, neg = _split_scores(t)
        return infonce_lower_bound(pos, neg).raw_bound

    return fn, (3, 4)


def case_composite_conv_relu_mean(rng):
    w = rng.standard_normal((2, 2, 3, 3)) * 0.7
    return (lambda t: T.tmean(T.relu(T.conv2d(t, Tensor(w), None, 1, 1)))), (2, 2, 5, 5)


CASES = {
    name[len("case_"):]: fn
    for name, fn in sorted(globals().items())
    if name.startswith("case_")
}


@pytest.mark.parametrize("name", sorted(CASES))
@pytest.mark.parametrize("dtype", [np.float32, np.float64], ids=["f32", "f64"])
def test_gradcheck(name, dtype):
    T.set_default_dtype(dtype)
    worst = 0.0
    for seed in SEEDS:
        rng = np.random.default_rng(seed)
        fn, shape = CASES[name](rng)
        x = rng.standard_normal(shape)
        worst = max(worst, check_gradient(fn, x))
    assert worst < TOL[np.dtype(dtype)], f"{name}: max rel err {worst}"
