import numpy as np
import pytest

from mimkd.data import (
    DatasetHandle,
    NormStats,
    augment,
    load_cifar_binary,
    save_cifar_binary,
    standardize,
    synth_shapes_dataset,
)


def _write_cifar10(path, n, seed=0):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 10, size=n, dtype=np.uint8)
    pixels = rng.integers(0, 256, size=(n, 3072), dtype=np.uint8)
    with open(path, "wb") as f:
        f.write(np.concatenate([labels[:, None], pixels], axis=1).tobytes())
    return labels, pixels


def test_cifar10_record_arithmetic(tmp_path):
    path = tmp_path / "batch.bin"
    labels, pixels = _write_cifar10(path, 50)
    handle = load_cifar_binary(path, "cifar10")
    assert len(handle) == 50
    assert np.array_equal(handle.labels, labels.astype(np.int64))
    assert np.array_equal(handle.images.reshape(50, 3072), pixels)


def test_cifar100_fine_label_is_second_byte(tmp_path):
    path = tmp_path / "c100.bin"
    rec = np.zeros(2 + 3072, dtype=np.uint8)
    rec[0], rec[1] = 7, 42  # coarse, fine
    path.write_bytes(rec.tobytes())
    handle = load_cifar_binary(path, "cifar100")
    assert handle.labels[0] == 42


def test_cifar_truncated_file_reports_offset(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"\x00" * (3073 * 2 + 100))
    with pytest.raises(ValueError, match="byte offset 6146"):
        load_cifar_binary(path, "cifar10")


def test_cifar_unknown_variant(tmp_path):
    with pytest.raises(ValueError, match="variant"):
        load_cifar_binary(tmp_path / "x.bin", "cifar20")


def test_cifar_save_load_roundtrip_bits(tmp_path):
    handle = synth_shapes_dataset(8, 4, seed=3)
    for variant in ("cifar10", "cifar100"):
        path = tmp_path / f"{variant}.bin"
        save_cifar_binary(handle, path, variant)
        back = load_cifar_binary(path, variant)
        assert np.array_equal(back.images, handle.images)
        assert np.array_equal(back.labels, handle.labels)


def test_handle_validation():
    with pytest.raises(ValueError, match="uint8 images"):
        DatasetHandle(np.zeros((2, 1, 4, 4)), np.zeros(2), "x")
    with pytest.raises(ValueError, match="mismatch"):
        DatasetHandle(np.zeros((2, 3, 4, 4)), np.zeros(3), "x")


def test_split_head_tail():
    handle = synth_shapes_dataset(4, 10, seed=0)
    train, test = handle.split(30)
    assert len(train) == 30 and len(test) == 10
    assert np.array_equal(np.concatenate([train.images, test.images]), handle.images)


def test_epoch_order_is_reproducible_permutation():
    handle = synth_shapes_dataset(4, 10, seed=1)
    a = handle.epoch_order(3)
    b = handle.epoch_order(3)
    assert np.array_equal(a, b)
    assert np.array_equal(np.sort(a), np.arange(len(handle)))
    assert not np.array_equal(handle.epoch_order(4), a)


def test_standardize_centers_training_set():
    handle = synth_shapes_dataset(8, 20, seed=2)
    stats = NormStats.from_handle(handle)
    out = standardize(handle.images, stats, dtype=np.float64)
    assert np.all(np.abs(out.mean(axis=(0, 2, 3))) < 1e-5)
    assert np.allclose(out.std(axis=(0, 2, 3)), 1.0, atol=1e-3)


def test_augment_shape_and_determinism():
    rng = np.random.default_rng(0)
    images = rng.standard_normal((6, 3, 32, 32)).astype(np.float32)
    out1 = augment(images, np.random.default_rng(5))
    out2 = augment(images, np.random.default_rng(5))
    assert out1.shape == images.shape
    assert np.array_equal(out1, out2)


def test_augment_centered_crop_recovers_image():
    # with flip suppressed and offsets forced to the pad width, the crop is
    # the identity
    class _Rig:
        def random(self, n):
            return np.ones(n)  # >= 0.5: never flip

        def integers(self, lo, hi, size):
            return np.full(size, 4)

    images = np.random.default_rng(1).standard_normal((3, 3, 32, 32)).astype(np.float32)
    assert np.allclose(augment(images, _Rig()), images)


def test_augment_double_flip_is_identity():
    class _Flip:
        def random(self, n):
            return np.zeros(n)  # always flip

        def integers(self, lo, hi, size):
            return np.full(size, 4)  # centered crop

    images = np.random.default_rng(2).standard_normal((2, 3, 32, 32)).astype(np.float32)
    assert np.allclose(augment(augment(images, _Flip()), _Flip()), images)


def test_synth_shapes_balanced_and_deterministic():
    a = synth_shapes_dataset(8, 5, seed=9)
    b = synth_shapes_dataset(8, 5, seed=9)
    assert len(a) == 40
    assert np.array_equal(a.images, b.images)
    assert np.array_equal(a.labels, b.labels)
    counts = np.bincount(a.labels, minlength=8)
    assert np.all(counts == 5)
    c = synth_shapes_dataset(8, 5, seed=10)
    assert not np.array_equal(a.images, c.images)


def test_synth_shapes_validation():
    with pytest.raises(ValueError, match="at least 2"):
        synth_shapes_dataset(1, 5)
    with pytest.raises(ValueError, match="at most"):
        synth_shapes_dataset(99, 5)


def test_synth_shapes_hard_for_linear_probe_but_above_chance():
    # position/scale jitter should defeat a raw-pixel linear readout (so the
    # task rewards convolutional features) while staying above 8-way chance
    handle = synth_shapes_dataset(8, 100, seed=4)
    train, test = handle.split(640)
    xt = train.images.reshape(len(train), -1).astype(np.float64) / 255.0
    xv = test.images.reshape(len(test), -1).astype(np.float64) / 255.0
    yt = np.eye(8)[train.labels]
    gram = xt.T @ xt + 200.0 * np.eye(xt.shape[1])
    w = np.linalg.solve(gram, xt.T @ yt)
    acc = ((xv @ w).argmax(axis=1) == test.labels).mean()
    assert 0.2 < acc < 0.8
