"""Dataset and batch augmentations that change class consistency across
frequency bands: HARS recombination, Mixup and CutMix."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .data import DataError, make_rng
from .spectral import dft2, recombine


@dataclass
class HarsConfig:
    radius: float = 12
    seed: int = 0

    def validate(self, side):
        if not 0 < self.radius < side // 2:
            raise ValueError(f"HARS radius must lie in (0, {side // 2}), got {self.radius}")


def hars_partners(labels, seed):
    """Partner index for every record: uniform over records of another class.

    Record ``i`` draws from its own stream ``(seed, i)``, so the result does
    not depend on processing order.
    """
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if classes.size < 2:
        raise DataError("HARS needs at least two classes")
    others = {c: np.flatnonzero(labels != c) for c in classes}
    partners = np.empty(len(labels), dtype=np.int64)
    for i, y in enumerate(labels):
        pool = others[y]
        partners[i] = pool[make_rng((seed, i)).integers(pool.size)]
    return partners


def hars_images(images, partner_images, radius):
    """``F^-1(F(X') * M_low + F(X) * M_high)``: low band from the partner."""
    return recombine(dft2(partner_images), dft2(images), radius)


def build_hars(dataset, config=None, chunk=1000):
    """HARS dataset and its manifest.

    Every image keeps its label and its frequencies above ``radius``; the
    frequencies up to ``radius`` come from a randomly chosen image of a
    different class.  Values are left unclipped.
    """
    config = config or HarsConfig()
    config.validate(dataset.side)
    partners = hars_partners(dataset.labels, config.seed)
    out = np.empty_like(dataset.images)
    for s in range(0, len(dataset), chunk):
        sl = slice(s, s + chunk)
        out[sl] = hars_images(dataset.images[sl], dataset.images[partners[sl]], config.radius)
    manifest = {
        "variant": "hars",
        "radius": config.radius,
        "seed": config.seed,
        "split": dataset.split_tag,
        "size": len(dataset),
        "partners": partners.tolist(),
    }
    return dataset.with_images(out), manifest


def manifest_json(manifest):
    return json.dumps(manifest, sort_keys=True, indent=1)


@dataclass
class MixedBatch:
    images: np.ndarray
    targets: np.ndarray
    lam: np.ndarray
    partner: np.ndarray


def mixup(images, targets, alpha, rng, lam=None):
    """Mixup: ``lam X_i + (1 - lam) X_pi(i)`` with the same mix of targets.

    One ``lam ~ Beta(alpha, alpha)`` per batch; the partner permutation is
    drawn from ``rng``.
    """
    if lam is None:
        if alpha <= 0:
            raise ValueError("alpha must be positive")
        lam = float(rng.beta(alpha, alpha))
    images = np.asarray(images, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    perm = rng.permutation(len(images))
    mixed = lam * images + (1 - lam) * images[perm]
    mixed_t = lam * targets + (1 - lam) * targets[perm]
    return MixedBatch(mixed, mixed_t, np.full(len(images), lam), perm)


def cutmix_box(side, lam, rng):
    """Square box of side ``floor(side * sqrt(1 - lam))`` around a uniform
    center, clipped to the image.  Returns ``(y0, y1, x0, x1)``."""
    cut = int(np.floor(side * np.sqrt(1.0 - lam)))
    cy, cx = rng.integers(side), rng.integers(side)
    y0, y1 = np.clip([cy - cut // 2, cy - cut // 2 + cut], 0, side)
    x0, x1 = np.clip([cx - cut // 2, cx - cut // 2 + cut], 0, side)
    return int(y0), int(y1), int(x0), int(x1)


def cutmix(images, targets, alpha, rng, lam=None, box=None):
    """CutMix: paste a partner's box; targets weighted by the pasted area.

    The target weight of the original image is ``1 - pasted / (H W)``
    measured after clipping the box at the border.
    """
    images = np.asarray(images, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    side = images.shape[-1]
    if lam is None:
        if alpha <= 0:
            raise ValueError("alpha must be positive")
        lam = float(rng.beta(alpha, alpha))
    perm = rng.permutation(len(images))
    if box is None:
        box = cutmix_box(side, lam, rng)
    y0, y1, x0, x1 = box
    mixed = images.copy()
    mixed[..., y0:y1, x0:x1] = images[perm][..., y0:y1, x0:x1]
    keep = 1.0 - (y1 - y0) * (x1 - x0) / (side * side)
    mixed_t = keep * targets + (1 - keep) * targets[perm]
    return MixedBatch(mixed, mixed_t, np.full(len(images), keep), perm)


def batch_hook(kind, alpha=1.0):
    """Training hook ``(images, targets, rng) -> (images, targets)`` or None."""
    if kind in (None, "none"):
        return None
    fn = {"mixup": mixup, "cutmix": cutmix}.get(kind)
    if fn is None:
        raise ValueError(f"unknown augmentation {kind!r}")

    def hook(images, targets, rng):
        mb = fn(images, targets, alpha, rng)
        return mb.images, mb.targets

    return hook
