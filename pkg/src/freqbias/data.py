"""Image datasets, deterministic RNG and the CIFAR-10 binary record format.

Images are float64 arrays in channel-major ``(C, H, W)`` layout, datasets
stack them as ``(N, C, H, W)``.  Pixel bytes map to ``[0, 1]`` by a plain
division by 255; no mean/std standardization happens here.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

CIFAR_SIDE = 32
CIFAR_CHANNELS = 3
CIFAR_CLASSES = 10
RECORD_BYTES = 1 + CIFAR_CHANNELS * CIFAR_SIDE * CIFAR_SIDE  # 3073

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


class DataError(ValueError):
    """Raised for malformed, truncated or otherwise invalid data."""


def make_rng(seed):
    """Return the toolkit's generator: numpy PCG64 seeded with ``seed``.

    ``seed`` may be an int or a sequence of ints (e.g. ``(seed, index)``
    to derive independent per-record streams).
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class LabeledDataset:
    """Immutable stack of square images with integer labels."""

    images: np.ndarray
    labels: np.ndarray
    class_count: int = CIFAR_CLASSES
    split_tag: str = "train"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        images = np.asarray(self.images, dtype=np.float64)
        if images.ndim == 3:
            images = images[:, None]
        if images.ndim != 4:
            raise DataError(f"images must be (N, C, H, W), got shape {images.shape}")
        if images.shape[2] != images.shape[3]:
            raise DataError(f"images must be square, got {images.shape[2]}x{images.shape[3]}")
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if labels.shape[0] != images.shape[0]:
            raise DataError(f"{labels.shape[0]} labels for {images.shape[0]} images")
        if labels.size and (labels.min() < 0 or labels.max() >= self.class_count):
            raise DataError(f"labels must lie in [0, {self.class_count})")
        if self.split_tag not in ("train", "test"):
            raise DataError(f"split_tag must be 'train' or 'test', not {self.split_tag!r}")
        object.__setattr__(self, "images", _frozen(images, np.float64))
        object.__setattr__(self, "labels", _frozen(labels, np.int64))

    def __len__(self):
        return self.images.shape[0]

    @property
    def side(self):
        return self.images.shape[-1]

    @property
    def channels(self):
        return self.images.shape[1]

    def class_counts(self):
        return np.bincount(self.labels, minlength=self.class_count)

    def take(self, index):
        index = np.asarray(index, dtype=np.int64)
        return LabeledDataset(self.images[index], self.labels[index], self.class_count, self.split_tag)

    def with_images(self, images):
        return LabeledDataset(images, self.labels, self.class_count, self.split_tag)


def concat(datasets):
    first = datasets[0]
    return LabeledDataset(
        np.concatenate([d.images for d in datasets]),
        np.concatenate([d.labels for d in datasets]),
        first.class_count,
        first.split_tag,
    )


def load_cifar_binary(path, split_tag="train"):
    """Read a CIFAR-10 binary batch (3073-byte records: label, R, G, B planes).

    ``path`` may also be a list of batch files, which are concatenated.
    """
    if isinstance(path, (list, tuple)):
        return concat([load_cifar_binary(p, split_tag) for p in path])
    raw = np.fromfile(os.fspath(path), dtype=np.uint8)
    n, rest = divmod(raw.size, RECORD_BYTES)
    if rest:
        raise DataError(
            f"{path}: truncated record at byte offset {n * RECORD_BYTES} "
            f"({rest} of {RECORD_BYTES} bytes present)"
        )
    records = raw.reshape(n, RECORD_BYTES)
    labels = records[:, 0]
    bad = np.flatnonzero(labels >= CIFAR_CLASSES)
    if bad.size:
        i = int(bad[0])
        raise DataError(
            f"{path}: corrupt record {i} at byte offset {i * RECORD_BYTES}: label byte {labels[i]}"
        )
    pixels = records[:, 1:].reshape(n, CIFAR_CHANNELS, CIFAR_SIDE, CIFAR_SIDE)
    return LabeledDataset(pixels / 255.0, labels, CIFAR_CLASSES, split_tag)


def quantize(images, clamp=False):
    """Map ``[0, 1]`` floats to bytes with round-half-up.

    Values outside ``[0, 1]`` raise unless ``clamp`` is set, in which case
    they are clipped first.
    """
    images = np.asarray(images, dtype=np.float64)
    if clamp:
        images = np.clip(images, 0.0, 1.0)
    elif images.size and (images.min() < 0.0 or images.max() > 1.0 or not np.isfinite(images).all()):
        raise DataError("pixel values outside [0, 1]; pass clamp=True to clip explicitly")
    # the epsilon absorbs representation error of k/255 * 255 just below x.5
    return np.floor(images * 255.0 + 0.5 + 1e-9).astype(np.uint8)


def save_dataset(dataset, path, clamp=False):
    """Write ``dataset`` as CIFAR-10 binary records."""
    if dataset.side != CIFAR_SIDE or dataset.channels != CIFAR_CHANNELS:
        raise DataError(f"CIFAR records hold 3x32x32 images, got {dataset.images.shape[1:]}")
    if dataset.class_count > 256:
        raise DataError("labels must fit in one byte")
    n = len(dataset)
    out = np.empty((n, RECORD_BYTES), dtype=np.uint8)
    out[:, 0] = dataset.labels
    out[:, 1:] = quantize(dataset.images, clamp=clamp).reshape(n, RECORD_BYTES - 1)
    with open(path, "wb") as fh:
        fh.write(out.tobytes())
    return path


def subset(dataset, per_class, rng):
    """Class-balanced random subset with ``per_class`` images per class.

    ``per_class=None`` (or ``"all"``) returns a permutation of the input.
    The result is ordered by the shuffled index, so it is a function of the
    dataset, ``per_class`` and the generator state only.
    """
    if per_class is None or per_class == "all":
        return dataset.take(rng.permutation(len(dataset)))
    chosen = []
    for c in range(dataset.class_count):
        members = np.flatnonzero(dataset.labels == c)
        if members.size < per_class:
            raise DataError(f"class {c} has {members.size} images, {per_class} requested")
        chosen.append(rng.choice(members, size=per_class, replace=False))
    index = np.concatenate(chosen)
    return dataset.take(index[rng.permutation(index.size)])


def to_gray(image):
    """Luma conversion of a ``(3, H, W)`` image; 1-channel input passes through."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        return image
    if image.shape[0] == 1:
        return image[0]
    r, g, b = LUMA_WEIGHTS
    return r * image[0] + g * image[1] + b * image[2]
