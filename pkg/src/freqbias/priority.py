"""Frequency analysis of input gradients: band gradients, the per-epoch
learning-priority matrix and the mixed-sample augmentation change rate.

The gradient restricted to band ``k`` is ``F^-1(F(dL/dX) * M_k)``; it is
what one would get by differentiating the loss with respect to the band-k
component of the image, but needs only a single backward pass.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .spectral import apply_mask, density_values, make_mask, n_bands, normalize_density


def band_gradient(gmap, mask):
    """Band-restricted gradient map ``F^-1(F(gmap) * mask)`` per channel."""
    return apply_mask(gmap, mask)


def band_gradients(gmap, binning="ceil"):
    """All band gradients plus the corner residual: ``(h//2 + 1, *gmap.shape)``.

    The stack sums back to ``gmap``.
    """
    h = np.shape(gmap)[-1]
    masks = [make_mask(h, kind="ring", k=k, binning=binning) for k in range(n_bands(h))]
    masks.append(make_mask(h, kind="corner", binning=binning))
    return np.stack([band_gradient(gmap, m) for m in masks])


def gradient_density(net, images, labels, batch_size=250):
    """Test-set average of per-image ``sum1`` densities of ``dL/dX``.

    Images whose gradient is exactly zero have no density and are left out
    of the average; if every image is left out the result is all zeros.
    """
    total, used = None, 0
    for s in range(0, len(images), batch_size):
        g = net.input_gradients(images[s : s + batch_size], labels[s : s + batch_size])
        dens = density_values(g, "none")
        mass = dens.sum(axis=1)
        live = mass > 0
        part = (dens[live] / mass[live, None]).sum(axis=0)
        used += int(live.sum())
        total = part if total is None else total + part
    return total / used if used else total


@dataclass
class PriorityMatrix:
    """Rows are epochs, columns frequency bands.

    ``raw`` holds the test-averaged ``sum1`` densities; ``values`` the same
    rows rescaled to a maximum of one.
    """

    raw: np.ndarray
    epochs: list = field(default_factory=list)

    def __post_init__(self):
        self.raw = np.atleast_2d(np.asarray(self.raw, dtype=np.float64))
        if not self.epochs:
            self.epochs = list(range(1, self.raw.shape[0] + 1))
        zero = np.flatnonzero(~(self.raw.max(axis=1) > 0))
        if zero.size:
            raise ValueError(f"all-zero gradient density at epoch {self.epochs[zero[0]]}")

    @property
    def values(self):
        return normalize_density(self.raw, "max1")

    def argmax_bands(self, skip_dc=True):
        """Peak band per epoch; band 0 is left out unless ``skip_dc`` is off."""
        start = 1 if skip_dc and self.raw.shape[1] > 1 else 0
        return self.raw[:, start:].argmax(axis=1) + start

    def to_csv(self, raw=False):
        """``epoch,band,value`` rows; ``raw`` writes the unscaled densities."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "band", "value"])
        for e, row in zip(self.epochs, self.raw if raw else self.values):
            for k, v in enumerate(row):
                w.writerow([e, k, repr(float(v))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text):
        rows = list(csv.reader(io.StringIO(text)))[1:]
        epochs = sorted({int(r[0]) for r in rows})
        bands = max(int(r[1]) for r in rows) + 1
        raw = np.zeros((len(epochs), bands))
        where = {e: i for i, e in enumerate(epochs)}
        for e, k, v in rows:
            raw[where[int(e)], int(k)] = float(v)
        return cls(raw, epochs)

    def to_pgm(self):
        """Binary 8-bit PGM heatmap: one row per epoch, one column per band."""
        pix = np.floor(255.0 * self.values + 0.5).astype(np.uint8)
        rows, cols = pix.shape
        return f"P5\n{cols} {rows}\n255\n".encode() + pix.tobytes()


def read_pgm(blob):
    magic, dims, maxval, rest = blob.split(b"\n", 3)
    if magic != b"P5":
        raise ValueError("not a binary PGM")
    cols, rows = map(int, dims.split())
    return np.frombuffer(rest, np.uint8, rows * cols).reshape(rows, cols)


class PriorityRecorder:
    """Epoch hook for :func:`smallnet.train` that fills a priority matrix online."""

    def __init__(self, test_set):
        self.test_set = test_set
        self.rows = []
        self.epochs = []

    def __call__(self, epoch, net):
        self.rows.append(gradient_density(net, self.test_set.images, self.test_set.labels))
        self.epochs.append(epoch)

    def matrix(self):
        return PriorityMatrix(np.array(self.rows), list(self.epochs))


def learning_priority(networks, test_set):
    """Priority matrix from an epoch-ordered sequence of network snapshots."""
    rec = PriorityRecorder(test_set)
    for epoch, net in enumerate(networks, start=1):
        rec(epoch, net)
    return rec.matrix()


def stable_window(n_epochs, fraction=0.2):
    """Last ``fraction`` of epochs (at least one) as a slice."""
    width = max(1, int(round(fraction * n_epochs)))
    return slice(n_epochs - width, n_epochs)


def msda_change_rate(msda, baseline, window=None):
    """Per-band ``(AI_k(G_msda) - AI_k(G)) / AI_k(G)`` scaled to ``[-1, 1]``.

    Densities are averaged over the epoch ``window`` (default: last 20% of
    epochs) first.  Bands with zero baseline density are NaN and do not take
    part in the scaling.
    """
    a = msda.raw if isinstance(msda, PriorityMatrix) else np.atleast_2d(msda)
    b = baseline.raw if isinstance(baseline, PriorityMatrix) else np.atleast_2d(baseline)
    if a.shape[1] != b.shape[1]:
        raise ValueError("band counts differ")
    if window is None:
        window = stable_window(min(len(a), len(b)))
    ma = a[window].mean(axis=0)
    mb = b[window].mean(axis=0)
    rate = np.full(mb.shape, np.nan)
    ok = mb > 0
    rate[ok] = (ma[ok] - mb[ok]) / mb[ok]
    peak = np.abs(rate[ok]).max() if ok.any() else 0.0
    if peak > 0:
        rate[ok] /= peak
    return rate


def change_rate_csv(rate):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["band", "value"])
    for k, v in enumerate(rate):
        w.writerow([k, repr(float(v))])
    return buf.getvalue()
