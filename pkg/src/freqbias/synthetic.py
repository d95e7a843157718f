"""Synthetic CIFAR-shaped datasets for demos and tests.

Each image is a class color plus a class-specific smooth shape (low
frequencies), a class-specific oriented texture with random phase (mid/high
frequencies) and per-image ``1/f`` background noise, which gives the
roughly ``1/f^2`` power fall-off of natural photographs.  The class
definitions depend only on ``world_seed``, so train and test splits drawn
with different seeds share the same classes.
"""

import numpy as np

from .data import LabeledDataset, make_rng
from .spectral import radius_grid


def _smooth_field(rng, side, max_radius, exponent=2.0, min_radius=0.0):
    d = np.fft.ifftshift(radius_grid(side))
    amp = np.where((d > min_radius) & (d <= max_radius), 1.0 / np.maximum(d, 1.0) ** (exponent / 2), 0.0)
    phase = rng.uniform(0, 2 * np.pi, (side, side))
    field = np.fft.ifft2(amp * np.exp(1j * phase)).real
    return field / (field.std() + 1e-12)


def _class_defs(classes, side, channels, world_seed):
    rng = make_rng((world_seed, 7))
    defs = []
    for _ in range(classes):
        defs.append(
            dict(
                color=rng.uniform(-0.02, 0.02, channels),
                tint=rng.uniform(-1, 1, channels),
                shape=_smooth_field(rng, side, 10.0, exponent=1.0, min_radius=1.5),
                freq=rng.uniform(6.0, 15.0),
                angle=rng.uniform(0, np.pi),
                tex_tint=rng.uniform(0.5, 1.0, channels),
            )
        )
    return defs


def make_synthetic(n_per_class, classes=10, side=32, channels=3, seed=0, split_tag="train",
                   world_seed=1234, shape_amp=0.08, texture_amp=0.04, noise_amp=0.12):
    """Class-balanced synthetic dataset with values clipped to ``[0, 1]``."""
    defs = _class_defs(classes, side, channels, world_seed)
    rng = make_rng((world_seed, seed, 11))
    h = np.arange(side)
    yy, xx = np.meshgrid(h, h, indexing="ij")
    images = np.empty((n_per_class * classes, channels, side, side))
    labels = np.repeat(np.arange(classes), n_per_class)
    for i, c in enumerate(labels):
        d = defs[c]
        shift = rng.integers(-2, 3, size=2)
        shape = np.roll(d["shape"], tuple(shift), axis=(0, 1))
        amp = shape_amp * rng.uniform(0.6, 1.4)
        angle = d["angle"] + rng.normal(0, 0.08)
        freq = d["freq"] * rng.uniform(0.95, 1.05)
        phase = rng.uniform(0, 2 * np.pi)
        grating = np.cos(2 * np.pi * freq / side * (xx * np.cos(angle) + yy * np.sin(angle)) + phase)
        noise = _smooth_field(rng, side, side)
        background = rng.uniform(0.3, 0.7, channels)
        img = (
            background[:, None, None]
            + d["color"][:, None, None]
            + amp * shape[None] * (1 + 0.5 * d["tint"][:, None, None])
            + texture_amp * rng.uniform(0.7, 1.3) * grating[None] * d["tex_tint"][:, None, None]
            + noise_amp * noise[None]
        )
        images[i] = img
    order = rng.permutation(len(labels))
    return LabeledDataset(np.clip(images[order], 0.0, 1.0), labels[order], classes, split_tag)
