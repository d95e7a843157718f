"""Centered 2D DFT with forward ``1/(HW)`` scaling, radial masks and
azimuthal spectral density.

All transforms act on the last two axes, so a single ``(H, W)`` field, a
``(C, H, W)`` image and an ``(N, C, H, W)`` stack are handled alike.  The
zero frequency sits at index ``(H // 2, W // 2)`` (the ``fftshift``
convention), for even and odd sizes.

Radial bands use the ceil rule: frequency ``(u, v)`` at distance ``d`` from
the center belongs to band ``ceil(d)``, i.e. band ``k`` is exactly
``low_mask(k) & ~low_mask(k - 1)``.  Bands ``0 .. H//2 - 1`` therefore
partition ``low_mask(H//2 - 1)``; whatever lies beyond (the grid corners)
is the ``"corner"`` residual.  ``binning="round"`` switches to
nearest-integer rings for sensitivity checks.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

NORMALIZATIONS = ("none", "sum1", "max1")


def _check_square(a):
    a = np.asarray(a)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValueError(f"expected square field(s) on the last two axes, got shape {a.shape}")
    return a


def dft2(x):
    """Centered spectrum ``F(X)(u, v) = 1/(HW) sum X(h, w) e^{-j2pi(uh/H + vw/W)}``.

    The DC coefficient equals the mean of the field.
    """
    x = _check_square(x)
    h, w = x.shape[-2:]
    return np.fft.fftshift(np.fft.fft2(x), axes=(-2, -1)) / (h * w)


def idft2(spectrum, return_residual=False):
    """Inverse of :func:`dft2`; returns the real part.

    With ``return_residual`` the max-abs imaginary residue is returned too;
    it is ~1e-17 for conjugate-symmetric spectra (spectra of real fields
    multiplied by any of the radial masks here).
    """
    spectrum = _check_square(spectrum)
    h, w = spectrum.shape[-2:]
    field = np.fft.ifft2(np.fft.ifftshift(spectrum, axes=(-2, -1))) * (h * w)
    if return_residual:
        residual = float(np.abs(field.imag).max()) if field.size else 0.0
        return field.real.copy(), residual
    return field.real.copy()


def radius_grid(h, w=None):
    """Euclidean distance of every grid point to the spectrum center."""
    w = h if w is None else w
    i = np.arange(h) - h // 2
    j = np.arange(w) - w // 2
    return np.hypot(i[:, None], j[None, :])


def band_index(h, w=None, binning="ceil"):
    """Integer band of every frequency (see module docstring)."""
    d = radius_grid(h, w)
    if binning == "ceil":
        # guard exact integers against hypot rounding
        return np.ceil(d - 1e-9).astype(np.int64)
    if binning == "round":
        return np.floor(d + 0.5).astype(np.int64)
    raise ValueError(f"unknown binning {binning!r}")


def n_bands(h):
    return h // 2


def make_mask(h, w=None, kind="low", r=None, k=None, binning="ceil"):
    """Boolean frequency mask.

    kind
        ``"low"``: distance <= r.  ``"high"``: complement of ``low``.
        ``"ring"``: band ``k``.  ``"corner"``: everything past band ``h//2 - 1``.
    """
    w = h if w is None else w
    if kind in ("low", "high"):
        if r is None or r < 0:
            raise ValueError("low/high masks need a radius r >= 0")
        low = radius_grid(h, w) <= r + 1e-9
        return low if kind == "low" else ~low
    band = band_index(h, w, binning)
    if kind == "ring":
        if k is None:
            raise ValueError("ring masks need a band index k")
        return band == k
    if kind == "corner":
        return band >= n_bands(h)
    raise ValueError(f"unknown mask kind {kind!r}")


def ring_masks(h, binning="ceil"):
    """All band masks ``0 .. h//2 - 1`` stacked as ``(h//2, h, h)``."""
    band = band_index(h, h, binning)
    return np.stack([band == k for k in range(n_bands(h))])


def apply_mask(x, mask):
    """``F^-1(F(x) * mask)`` applied per channel."""
    return idft2(dft2(x) * mask)


def decompose(x, r):
    """Split ``x`` into its low (distance <= r) and high frequency parts."""
    spec = dft2(x)
    h = spec.shape[-1]
    low = make_mask(h, kind="low", r=r)
    return idft2(spec * low), idft2(spec * ~low)


def band_filter(x, kind, r):
    """Low- or high-pass image at radius ``r`` (``kind`` in ``{"low", "high"}``)."""
    x = _check_square(x)
    return apply_mask(x, make_mask(x.shape[-1], kind=kind, r=r))


def recombine(spec_a, spec_b, r):
    """Field with frequencies <= r taken from ``spec_a`` and the rest from ``spec_b``."""
    spec_a = _check_square(spec_a)
    spec_b = _check_square(np.broadcast_to(spec_b, spec_a.shape) if np.isscalar(spec_b) else spec_b)
    if spec_a.shape != spec_b.shape:
        raise ValueError(f"spectrum shapes differ: {spec_a.shape} vs {spec_b.shape}")
    low = make_mask(spec_a.shape[-1], kind="low", r=r)
    return idft2(np.where(low, spec_a, spec_b))


@dataclass(frozen=True)
class SpectralDensity:
    values: np.ndarray
    normalization: str = "sum1"

    def __len__(self):
        return len(self.values)

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["k", "value", "normalization"])
        for k, v in enumerate(self.values):
            writer.writerow([k, repr(float(v)), self.normalization])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text):
        rows = list(csv.DictReader(io.StringIO(text)))
        values = np.array([float(r["value"]) for r in rows])
        return cls(values, rows[0]["normalization"] if rows else "none")


def normalize_density(values, mode):
    values = np.asarray(values, dtype=np.float64)
    if mode == "none":
        return values
    if mode == "sum1":
        total = values.sum(axis=-1, keepdims=True)
    elif mode == "max1":
        total = values.max(axis=-1, keepdims=True)
    else:
        raise ValueError(f"normalization must be one of {NORMALIZATIONS}")
    if np.any(total <= 0):
        raise ValueError("cannot normalize an all-zero density")
    return values / total


def _ring_means(power, binning):
    h = power.shape[-1]
    band = band_index(h, h, binning).ravel()
    nb = n_bands(h)
    keep = band < nb
    counts = np.bincount(band[keep], minlength=nb)
    assert counts.min() > 0, "empty ring"
    onehot = np.zeros((h * h, nb))
    onehot[np.flatnonzero(keep), band[keep]] = 1.0 / counts[band[keep]]
    return power.reshape(-1, h * h) @ onehot


def density_values(x, normalization="sum1", binning="ceil"):
    """Raw density array for one field or a stack.

    ``x`` of shape ``(..., C, H, W)`` with ``C`` channels gives one curve
    per leading index (channels averaged).  A plain ``(H, W)`` field gives a
    single curve.
    """
    x = _check_square(x)
    if x.ndim == 2:
        x = x[None]
    power = np.abs(dft2(x)) ** 2
    lead = power.shape[:-3]
    means = _ring_means(power, binning)
    means = means.reshape(lead + (power.shape[-3], -1)).mean(axis=-2)
    return normalize_density(means, normalization)


def spectral_density(x, normalization="sum1", binning="ceil"):
    """Azimuthally averaged power ``AI_k`` for ``k = 0 .. H//2 - 1``.

    ``AI_k`` is the mean of ``|F(x)|^2`` over band ``k``; multi-channel
    fields are averaged over channels.
    """
    return SpectralDensity(density_values(x, normalization, binning), normalization)


def mean_density(images, normalization="sum1", binning="ceil"):
    """Average of per-image ``sum1`` densities of an ``(N, C, H, W)`` stack, renormalized."""
    per_image = density_values(images, "sum1", binning)
    return SpectralDensity(normalize_density(per_image.mean(axis=0), normalization), normalization)
