import numpy as np
import pytest

from mimkd.checkpoint import load_checkpoint, save_checkpoint


def test_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    arrays = {
        "model.student.blocks.0.conv.weight": rng.standard_normal((8, 3, 3, 3)).astype(np.float32),
        "model.student.classifier.bias": rng.standard_normal(8).astype(np.float32),
        "critic.global.teacher_proj.main1.weight": rng.standard_normal((16, 4)).astype(np.float32),
        "scalar": np.float32(3.25),
    }
    path = tmp_path / "a.ckpt"
    save_checkpoint(path, arrays)
    back = load_checkpoint(path)
    assert list(back) == list(arrays)
    for name, arr in arrays.items():
        assert back[name].dtype == np.float32
        assert np.asarray(arr).shape == back[name].shape
        assert np.asarray(arr, dtype=np.float32).tobytes() == back[name].tobytes()


def test_resave_identical_bytes(tmp_path):
    rng = np.random.default_rng(1)
    arrays = {"w": rng.standard_normal((5, 5)).astype(np.float32)}
    p1, p2 = tmp_path / "1.ckpt", tmp_path / "2.ckpt"
    save_checkpoint(p1, arrays)
    save_checkpoint(p2, load_checkpoint(p1))
    assert p1.read_bytes() == p2.read_bytes()


def test_f64_input_stored_as_f32(tmp_path):
    path = tmp_path / "c.ckpt"
    save_checkpoint(path, {"x": np.array([1.0, 2.0], dtype=np.float64)})
    back = load_checkpoint(path)
    assert back["x"].dtype == np.float32


def test_empty_checkpoint(tmp_path):
    path = tmp_path / "empty.ckpt"
    save_checkpoint(path, {})
    assert load_checkpoint(path) == {}


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"NOPE" + b"\x00" * 8)
    with pytest.raises(ValueError, match="magic"):
        load_checkpoint(path)


def test_bad_version(tmp_path):
    import struct

    path = tmp_path / "v9.ckpt"
    path.write_bytes(b"MIMK" + struct.pack("<II", 9, 0))
    with pytest.raises(ValueError, match="version"):
        load_checkpoint(path)


def test_trailing_bytes_rejected(tmp_path):
    path = tmp_path / "t.ckpt"
    save_checkpoint(path, {"x": np.zeros(2, dtype=np.float32)})
    path.write_bytes(path.read_bytes() + b"\x00")
    with pytest.raises(ValueError, match="trailing"):
        load_checkpoint(path)


def test_unicode_names(tmp_path):
    path = tmp_path / "u.ckpt"
    save_checkpoint(path, {"model.naïve.w": np.ones(3, dtype=np.float32)})
    assert "model.naïve.w" in load_checkpoint(path)
