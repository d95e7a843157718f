"""Convolutional density enhancement: fit depthwise filters so filtered
images follow a target spectral density with a high-frequency bump, then
put the original low band back.

The fitting loss for a batch is::

    sum_k (mean_i AI_k(conv(X_i)) - target_k)^2  +  beta * mean((conv(X) - X)^2)

with per-image ``sum1`` densities taken over the non-DC bands (band 0 is
pinned to zero on both sides, otherwise the mean brightness swamps every
other band).  Its gradient with respect to the
kernels goes through the ring means, ``|F|^2`` and the DFT by hand.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .data import DataError, make_rng
from .smallnet import NumericalError
from .spectral import band_index, density_values, dft2, n_bands, normalize_density, recombine

KERNEL = 5


@dataclass(frozen=True)
class TargetDensity:
    values: np.ndarray
    peak_band: float
    peak_width: float
    peak_height: float
    minimum: int
    skip_dc: bool = True

    def params(self):
        return {
            "k_p": self.peak_band,
            "sigma_p": self.peak_width,
            "a": self.peak_height,
            "minimum": self.minimum,
            "skip_dc": self.skip_dc,
        }


def ac_density(values, skip_dc=True):
    """``sum1`` density with band 0 zeroed first when ``skip_dc``."""
    v = np.array(values, dtype=np.float64)
    if skip_dc:
        v[..., 0] = 0.0
    return normalize_density(v, "sum1")


def interior_minima(values, upto=None):
    """Strict-left local minima ``0 < k < upto`` (``v[k-1] > v[k] <= v[k+1]``)."""
    v = np.asarray(values)
    upto = len(v) - 1 if upto is None else min(int(upto), len(v) - 1)
    return [k for k in range(1, upto) if v[k - 1] > v[k] <= v[k + 1]]


def dataset_density(images, skip_dc=True):
    """Mean over images of the per-image density used by the fitting loss."""
    return ac_density(density_values(images, "none"), skip_dc).reshape(-1, n_bands(np.shape(images)[-1])).mean(axis=0)


def make_target(mean_density, k_p=13, sigma_p=1.5, a=0.05, skip_dc=True):
    """``normalize_sum1(mean_density + a * exp(-(k - k_p)^2 / (2 sigma_p^2)))``.

    With ``skip_dc`` the mean density is renormalized without band 0 and
    the target keeps a zero there.  The curve must have exactly one interior
    local minimum below the peak; that band becomes the recombination radius.
    """
    base = ac_density(mean_density, skip_dc)
    nb = base.size
    if not 2 * nb / 3 <= k_p < nb:
        raise ValueError(f"peak band {k_p} must lie in the upper third of {nb} bands")
    k = np.arange(nb)
    values = ac_density(base + a * np.exp(-((k - k_p) ** 2) / (2 * sigma_p**2)), skip_dc)
    if a == 0:
        return TargetDensity(values, k_p, sigma_p, a, int(np.argmin(values[1:]) + 1), skip_dc)
    minima = interior_minima(values, k_p)
    if len(minima) != 1:
        raise ValueError(f"target has {len(minima)} interior minima below the peak ({minima}); expected one")
    return TargetDensity(values, k_p, sigma_p, a, minima[0], skip_dc)


@dataclass
class FilterGroup:
    """Depthwise kernels, one ``KERNEL x KERNEL`` kernel per channel."""

    kernels: np.ndarray
    scope: str = "shared"
    label: int | None = None
    target: dict = field(default_factory=dict)

    def apply(self, images):
        return depthwise_conv(images, self.kernels)

    def to_json(self):
        return json.dumps(
            {"kernels": self.kernels.tolist(), "scope": self.scope, "label": self.label, "target": self.target},
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(np.array(d["kernels"], dtype=np.float64), d["scope"], d["label"], d["target"])


def _windows(images, k):
    p = k // 2
    xp = np.pad(images, ((0, 0), (0, 0), (p, p), (p, p)), mode="edge")
    return sliding_window_view(xp, (k, k), axis=(2, 3))


def depthwise_conv(images, kernels):
    """Per-channel correlation, stride 1, edge-replicated 'same' padding."""
    images = np.asarray(images, dtype=np.float64)
    if images.ndim == 3:
        return depthwise_conv(images[None], kernels)[0]
    return np.einsum("nchwab,cab->nchw", _windows(images, kernels.shape[-1]), kernels, optimize=True)


def identity_kernels(channels, k=KERNEL):
    ker = np.zeros((channels, k, k))
    ker[:, k // 2, k // 2] = 1.0
    return ker


def _density_weights(h, nb, binning="ceil"):
    band = band_index(h, h, binning)
    counts = np.bincount(band.ravel(), minlength=nb)[:nb]
    return band, counts


def loss_terms(x_conv, x, target, beta=1.0):
    """``(spectral, pixel)`` terms of the fitting loss; pixel already times ``beta``."""
    t, skip_dc = _target_values(target)
    dens = ac_density(density_values(x_conv, "none"), skip_dc)
    dens = dens.reshape(-1, dens.shape[-1]).mean(axis=0)
    spectral = float(np.sum((dens - t) ** 2))
    pixel = beta * float(np.mean((np.asarray(x_conv) - np.asarray(x)) ** 2))
    return spectral, pixel


def cdes_loss(x_conv, x, target, beta=1.0):
    s, p = loss_terms(x_conv, x, target, beta)
    return s + p


def _target_values(target):
    if isinstance(target, TargetDensity):
        return target.values, target.skip_dc
    return np.asarray(target, dtype=np.float64), False


def loss_and_grad(kernels, images, target, beta=1.0):
    """Fitting loss and its gradient w.r.t. ``kernels`` for a batch ``(B, C, H, W)``."""
    t, skip_dc = _target_values(target)
    b, c, h, w = images.shape
    nb = n_bands(h)
    win = _windows(images, kernels.shape[-1])
    y = np.einsum("nchwab,cab->nchw", win, kernels, optimize=True)
    f = dft2(y)
    power = np.abs(f) ** 2
    band, counts = _density_weights(h, nb)
    inside = (band < nb) & (band >= (1 if skip_dc else 0))
    flat_band = band[inside]

    d = np.zeros((b, nb))
    pw = power[..., inside].mean(axis=1)  # channel mean, (B, n_inside)
    for i in range(b):
        d[i] = np.bincount(flat_band, weights=pw[i], minlength=nb) / counts
    s = d.sum(axis=1, keepdims=True)
    n = d / s
    m = n.mean(axis=0)
    spectral = float(np.sum((m - t) ** 2))
    diff = y - images
    pixel = beta * float(np.mean(diff**2))

    g = 2.0 * (m - t)
    dd = (g[None, :] - (n * g[None, :]).sum(axis=1, keepdims=True)) / (b * s)
    wmap = np.zeros((b, h, w))
    wmap[:, inside] = dd[:, flat_band] / counts[flat_band]
    wmap /= c
    dy = 2.0 * np.fft.ifft2(np.fft.ifftshift(wmap[:, None] * f, axes=(-2, -1))).real
    dy += 2.0 * beta * diff / diff.size
    dk = np.einsum("nchw,nchwab->cab", dy, win, optimize=True)
    return spectral + pixel, spectral, pixel, dk


@dataclass
class FitConfig:
    iterations: int = 2000
    batch_size: int = 100
    learning_rate: float = 1e-2
    momentum: float = 0.9
    optimizer: str = "adam"
    beta: float = 1.0
    init_noise: float = 0.01
    tol: float = 1e-5
    window: int = 50
    seed: int = 0


@dataclass
class FitTrace:
    loss: list = field(default_factory=list)
    spectral: list = field(default_factory=list)
    pixel: list = field(default_factory=list)
    stopped_at: int = 0


def fit_filters(images, target, config=None, scope="shared", label=None):
    """Fit one filter group to ``images`` (a whole split or one class slice).

    Starts from the identity kernel plus uniform noise of ``init_noise``;
    stops after ``iterations`` or when the mean loss over the last
    ``window`` iterations changes by less than ``tol`` relative to the
    window before.
    """
    config = config or FitConfig()
    images = np.asarray(images, dtype=np.float64)
    if len(images) == 0:
        raise DataError("cannot fit filters on an empty slice")
    rng = make_rng((config.seed, 0 if label is None else label + 1))
    ker = identity_kernels(images.shape[1])
    if config.init_noise:
        ker += rng.uniform(-config.init_noise, config.init_noise, ker.shape)
    m1 = np.zeros_like(ker)
    m2 = np.zeros_like(ker)
    trace = FitTrace()
    n = len(images)
    bs = min(config.batch_size, n)
    order = rng.permutation(n)
    pos = 0
    for it in range(1, config.iterations + 1):
        if pos + bs > n:
            order = rng.permutation(n)
            pos = 0
        batch = images[order[pos : pos + bs]]
        pos += bs
        loss, spec, pix, grad = loss_and_grad(ker, batch, target, config.beta)
        if not np.isfinite(loss):
            raise NumericalError(f"non-finite filter loss at iteration {it}")
        trace.loss.append(loss)
        trace.spectral.append(spec)
        trace.pixel.append(pix)
        if config.optimizer == "adam":
            m1 = 0.9 * m1 + 0.1 * grad
            m2 = 0.999 * m2 + 0.001 * grad**2
            step = (m1 / (1 - 0.9**it)) / (np.sqrt(m2 / (1 - 0.999**it)) + 1e-12)
            ker = ker - config.learning_rate * step
        elif config.optimizer == "momentum":
            m1 = config.momentum * m1 - config.learning_rate * grad
            ker = ker + m1
        else:
            raise ValueError(f"unknown optimizer {config.optimizer!r}")
        trace.stopped_at = it
        wdw = config.window
        if it >= 2 * wdw:
            recent = np.mean(trace.loss[-wdw:])
            before = np.mean(trace.loss[-2 * wdw : -wdw])
            if abs(before - recent) <= config.tol * abs(before):
                break
    target_params = target.params() if isinstance(target, TargetDensity) else {}
    return FilterGroup(ker, scope, label, target_params), trace


def recombined(images, conv_images, radius):
    """``F^-1(F(X) * M_low + F(X_conv) * M_high)``."""
    return recombine(dft2(images), dft2(conv_images), radius)


def build_cdes_dataset(dataset, mode, target, filters, chunk=1000):
    """Replace every image by its recombination with the filtered version.

    ``filters`` is one :class:`FilterGroup` for ``"wcr"`` or a mapping
    ``label -> FilterGroup`` for ``"scr"``.  Labels and split are kept.
    """
    radius = target.minimum if isinstance(target, TargetDensity) else int(target)
    out = np.empty_like(dataset.images)
    if mode == "wcr":
        if not isinstance(filters, FilterGroup):
            raise ValueError("wcr mode takes a single shared filter group")
        for s in range(0, len(dataset), chunk):
            x = dataset.images[s : s + chunk]
            out[s : s + chunk] = recombined(x, filters.apply(x), radius)
    elif mode == "scr":
        for c in range(dataset.class_count):
            idx = np.flatnonzero(dataset.labels == c)
            if idx.size == 0:
                continue
            if c not in filters:
                raise DataError(f"no filter group for class {c}")
            x = dataset.images[idx]
            out[idx] = recombined(x, filters[c].apply(x), radius)
    else:
        raise ValueError(f"mode must be 'wcr' or 'scr', not {mode!r}")
    manifest = {
        "variant": f"cdes-{mode}",
        "radius": int(radius),
        "target": target.params() if isinstance(target, TargetDensity) else {},
        "split": dataset.split_tag,
        "size": len(dataset),
    }
    return dataset.with_images(out), manifest


def fit_config_dict(config):
    return asdict(config)
