"""Dataset ingestion and augmentation.

Supports the raw CIFAR binary record format and a procedurally rendered
32x32 shapes dataset for desk-scale experiments. Normalization statistics
are computed from the loaded training split so synthetic and real data share
one code path.
"""

from dataclasses import dataclass

import numpy as np

RECORD_PIXELS = 3072  # 3 planes x 32 x 32


@dataclass
class ImageBatch:
    images: np.ndarray  # [N, 3, H, W] float, standardized
    labels: np.ndarray  # [N] int


class DatasetHandle:
    """Raw uint8 images with labels and reproducible per-epoch ordering."""

    def __init__(self, images, labels, source, shuffle_seed=0):
        images = np.asarray(images, dtype=np.uint8)
        labels = np.asarray(labels, dtype=np.int64)
        if images.ndim != 4 or images.shape[1] != 3:
            raise ValueError(f"expected [N,3,H,W] uint8 images, got {images.shape}")
        if len(images) != len(labels):
            raise ValueError("image/label count mismatch")
        self.images = images
        self.labels = labels
        self.source = source
        self.shuffle_seed = shuffle_seed

    def __len__(self):
        return len(self.images)

    @property
    def num_classes(self):
        return int(self.labels.max()) + 1 if len(self.labels) else 0

    def split(self, n_train):
        """Deterministic head/tail split into train and test handles."""
        return (
            DatasetHandle(self.images[:n_train], self.labels[:n_train],
                          self.source, self.shuffle_seed),
            DatasetHandle(self.images[n_train:], self.labels[n_train:],
                          self.source, self.shuffle_seed),
        )

    def epoch_order(self, epoch):
        rng = np.random.default_rng((self.shuffle_seed, epoch))
        return rng.permutation(len(self.images))


@dataclass
class NormStats:
    mean: np.ndarray  # per channel, of images scaled to [0,1]
    std: np.ndarray

    @classmethod
    def from_handle(cls, handle):
        scaled = handle.images.astype(np.float64) / 255.0
        mean = scaled.mean(axis=(0, 2, 3))
        std = scaled.std(axis=(0, 2, 3))
        std = np.maximum(std, 1e-8)
        return cls(mean.astype(np.float32), std.astype(np.float32))


def standardize(images_u8, stats: NormStats, dtype=np.float32):
    scaled = images_u8.astype(dtype) / np.asarray(255.0, dtype=dtype)
    return (scaled - stats.mean[None, :, None, None].astype(dtype)) / stats.std[
        None, :, None, None
    ].astype(dtype)


# -- CIFAR binary format ---------------------------------------------------


def load_cifar_binary(path, variant="cifar10", shuffle_seed=0):
    """Parse raw CIFAR records (label byte(s) + RGB planes, row-major)."""
    if variant == "cifar10":
        label_bytes = 1
    elif variant == "cifar100":
        label_bytes = 2  # coarse then fine; fine label is used
    else:
        raise ValueError(f"unknown variant {variant!r}")
    with open(path, "rb") as f:
        blob = f.read()
    record = label_bytes + RECORD_PIXELS
    if len(blob) % record != 0:
        index = len(blob) // record
        raise ValueError(
            f"{path}: length {len(blob)} is not a multiple of record size {record} "
            f"(truncated at record {index}, byte offset {index * record})"
        )
    n = len(blob) // record
    raw = np.frombuffer(blob, dtype=np.uint8).reshape(n, record)
    labels = raw[:, label_bytes - 1].astype(np.int64)
    images = raw[:, label_bytes:].reshape(n, 3, 32, 32)
    return DatasetHandle(images, labels, f"cifar-file:{path}", shuffle_seed)


def save_cifar_binary(handle, path, variant="cifar10"):
    """Export a handle in the raw CIFAR record layout (bit-exact round-trip)."""
    if variant == "cifar10":
        head = handle.labels.astype(np.uint8)[:, None]
    elif variant == "cifar100":
        head = np.stack(
            [np.zeros(len(handle), dtype=np.uint8), handle.labels.astype(np.uint8)],
            axis=1,
        )
    else:
        raise ValueError(f"unknown variant {variant!r}")
    body = handle.images.reshape(len(handle), RECORD_PIXELS)
    with open(path, "wb") as f:
        f.write(np.concatenate([head, body], axis=1).tobytes())


# -- augmentation ----------------------------------------------------------


def augment(images, rng, pad=4):
    """Per-image random horizontal flip and zero-pad-then-crop.

    Operates on standardized float images; output shape equals input shape.
    """
    n, c, h, w = images.shape
    out = np.empty_like(images)
    flips = rng.random(n) < 0.5
    offs = rng.integers(0, 2 * pad + 1, size=(n, 2))
    padded = np.zeros((c, h + 2 * pad, w + 2 * pad), dtype=images.dtype)
    for i in range(n):
        img = images[i, :, :, ::-1] if flips[i] else images[i]
        padded[:] = 0
        padded[:, pad : pad + h, pad : pad + w] = img
        oy, ox = offs[i]
        out[i] = padded[:, oy : oy + h, ox : ox + w]
    return out


# -- synthetic shapes ------------------------------------------------------

_SHAPES = ("disk", "square", "triangle", "cross")
_COLORS = (
    (220, 60, 60),
    (60, 90, 220),
    (60, 200, 90),
    (230, 200, 50),
)


def _shape_mask(shape, size, cx, cy, scale):
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    dx, dy = xx - cx, yy - cy
    if shape == "disk":
        return dx * dx + dy * dy <= scale * scale
    if shape == "square":
        return (np.abs(dx) <= scale) & (np.abs(dy) <= scale)
    if shape == "triangle":
        return (dy >= -scale) & (np.abs(dx) <= (scale - dy) * 0.6) & (dy <= scale)
    if shape == "cross":
        arm = max(scale * 0.45, 1.5)
        return ((np.abs(dx) <= arm) & (np.abs(dy) <= scale)) | (
            (np.abs(dy) <= arm) & (np.abs(dx) <= scale)
        )
    raise ValueError(shape)


def synth_shapes_dataset(num_classes=8, per_class=500, seed=0, size=32,
                         noise=0.25, shuffle_seed=None):
    """Render a balanced shapes-and-colors classification set.

    Class identity is a (shape, color) combination; position, scale, color
    jitter, and background noise vary per image. Deterministic per seed.
    """
    if num_classes < 2:
        raise ValueError("need at least 2 classes")
    if num_classes > len(_SHAPES) * len(_COLORS):
        raise ValueError(f"at most {len(_SHAPES) * len(_COLORS)} classes supported")
    rng = np.random.default_rng(seed)
    n = num_classes * per_class
    images = np.zeros((n, 3, size, size), dtype=np.uint8)
    labels = np.zeros(n, dtype=np.int64)
    idx = 0
    for cls in range(num_classes):
        shape = _SHAPES[cls % len(_SHAPES)]
        base = np.array(_COLORS[cls // len(_SHAPES)], dtype=np.float64)
        for _ in range(per_class):
            img = rng.normal(0.45, noise, size=(3, size, size))
            cx = size / 2 + rng.uniform(-6, 6)
            cy = size / 2 + rng.uniform(-6, 6)
            scale = rng.uniform(4.0, 7.5)
            mask = _shape_mask(shape, size, cx, cy, scale)
            color = np.clip(base / 255.0 + rng.uniform(-0.18, 0.18, size=3), 0, 1)
            for ch in range(3):
                img[ch][mask] = color[ch] + rng.normal(0, noise / 2, size=mask.sum())
            images[idx] = (np.clip(img, 0, 1) * 255).astype(np.uint8)
            labels[idx] = cls
            idx += 1
    order = rng.permutation(n)
    return DatasetHandle(
        images[order], labels[order], f"synth-shapes:seed={seed}",
        shuffle_seed if shuffle_seed is not None else seed,
    )
