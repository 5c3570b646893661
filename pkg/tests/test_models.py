import numpy as np
import pytest

from mimkd import tensor as T
from mimkd.models import (
    ConvNetSpec,
    TapSchedule,
    build_convnet,
    forward_with_taps,
    set_eval,
    set_train,
)
from mimkd.objectives import build_pairing_set
from mimkd.tensor import Tensor


def _rng(seed=0):
    return np.random.default_rng(seed)


def test_spec_validation():
    ConvNetSpec().validate()
    with pytest.raises(ValueError, match="style"):
        ConvNetSpec(style="resnet").validate()
    with pytest.raises(ValueError, match="4 block"):
        ConvNetSpec(widths=(8, 16, 32)).validate()
    with pytest.raises(ValueError, match="too small"):
        ConvNetSpec(input_shape=(3, 8, 8)).validate()


def test_tap_schedule_validation():
    TapSchedule().validate()
    with pytest.raises(ValueError, match="1..4"):
        TapSchedule(blocks=(0, 2)).validate()
    with pytest.raises(ValueError, match="ordered"):
        TapSchedule(blocks=(3, 2)).validate()


@pytest.mark.parametrize("style", ["stride2", "maxpool"])
def test_spatial_ladder_and_final_dim(style):
    model = build_convnet(ConvNetSpec(style=style), _rng(), TapSchedule((1, 2, 3, 4)))
    out = forward_with_taps(model, Tensor(np.random.default_rng(1).standard_normal((2, 3, 32, 32))))
    assert [m.shape[2] for m in out.maps] == [16, 8, 4, 2]
    assert out.final.shape == (2, model.spec.widths[3])
    assert out.logits.shape == (2, model.spec.num_classes)


def test_default_taps_spatial_sizes():
    model = build_convnet(ConvNetSpec(), _rng())
    out = forward_with_taps(model, Tensor(np.zeros((1, 3, 32, 32))))
    assert [m.shape[2] for m in out.maps] == [8, 4, 2]


def test_taps_non_increasing_spatial():
    model = build_convnet(ConvNetSpec(style="maxpool"), _rng(), TapSchedule((1, 3, 4)))
    out = forward_with_taps(model, Tensor(np.zeros((1, 3, 32, 32))))
    sizes = [m.shape[2] for m in out.maps]
    assert sizes == sorted(sizes, reverse=True)


def test_parameter_count_ratio_teacher_student():
    teacher = build_convnet(ConvNetSpec(widths=(32, 64, 128, 256)), _rng())
    student = build_convnet(ConvNetSpec(widths=(8, 16, 32, 64)), _rng())
    ratio = teacher.num_parameters() / student.num_parameters()
    assert 12 < ratio < 18


def test_num_classes_controls_logits():
    model = build_convnet(ConvNetSpec(num_classes=10), _rng())
    out = forward_with_taps(model, Tensor(np.zeros((3, 3, 32, 32))))
    assert out.logits.shape == (3, 10)


def test_softmax_of_logits_normalized():
    model = build_convnet(ConvNetSpec(), _rng(2))
    out = forward_with_taps(model, Tensor(np.random.default_rng(3).standard_normal((4, 3, 32, 32))))
    probs = np.exp(T.log_softmax(out.logits, axis=1).data)
    assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-6)


def test_input_shape_mismatch_errors():
    model = build_convnet(ConvNetSpec(), _rng())
    with pytest.raises(ValueError, match="does not match"):
        forward_with_taps(model, Tensor(np.zeros((1, 3, 16, 16))))


def test_eval_mode_deterministic_and_uses_running_stats():
    model = build_convnet(ConvNetSpec(), _rng(4))
    x = Tensor(np.random.default_rng(5).standard_normal((4, 3, 32, 32)))
    set_train(model)
    with T.no_grad():
        forward_with_taps(model, x)  # moves running stats
    set_eval(model)
    with T.no_grad():
        a = forward_with_taps(model, x).logits.data.copy()
        b = forward_with_taps(model, x).logits.data.copy()
    assert np.array_equal(a, b)
    # single-sample eval works because BN uses running stats
    with T.no_grad():
        one = forward_with_taps(model, Tensor(x.data[:1])).logits
    assert np.allclose(one.data, a[:1], atol=1e-5)


def test_no_grad_forward_builds_no_tape():
    model = build_convnet(ConvNetSpec(), _rng(6))
    with T.no_grad():
        out = forward_with_taps(model, Tensor(np.zeros((2, 3, 32, 32))))
    assert not out.logits.requires_grad
    assert out.logits._backward is None


def test_equal_depth_networks_pair_fully():
    teacher = build_convnet(ConvNetSpec(widths=(32, 64, 128, 256)), _rng(7))
    student = build_convnet(ConvNetSpec(widths=(8, 16, 32, 64)), _rng(8))
    x = Tensor(np.zeros((2, 3, 32, 32)))
    with T.no_grad():
        t = forward_with_taps(teacher, x)
        s = forward_with_taps(student, x)
    assert build_pairing_set(t.maps, s.maps) == [(0, 0), (1, 1), (2, 2)]


def test_state_roundtrip_preserves_outputs():
    spec = ConvNetSpec()
    a = build_convnet(spec, _rng(9))
    b = build_convnet(spec, _rng(10))
    x = Tensor(np.random.default_rng(11).standard_normal((2, 3, 32, 32)))
    set_eval(a)
    set_eval(b)
    b.load_state(a.state_arrays())
    with T.no_grad():
        assert np.array_equal(
            forward_with_taps(a, x).logits.data, forward_with_taps(b, x).logits.data
        )
