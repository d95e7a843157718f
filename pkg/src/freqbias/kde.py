"""Per-dimension Gaussian KDE of class features and the overlap-based
inter-class variance.

For one feature dimension every class gets a density curve on a grid shared
by all classes.  Two classes overlap by ``sum(min) / sum(max)`` of their
curves (``overlap_mode="area"``), and the inter-class variance is one minus
the mean overlap over distinct class pairs, with overlaps averaged over the
feature dimensions first.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

GRID_SIZE = 256
GRID_MARGIN = 3.0
OVERLAP_MODES = ("area", "pointwise")


def silverman_bandwidth(samples):
    """Robust Silverman rule ``0.9 * min(std, IQR / 1.34) * N^(-1/5)``.

    Returns ``(h, degenerate)``.  When the robust spread is zero the rule is
    undefined; identical samples fall back to ``1e-6 * (1 + |value|)`` and a
    zero IQR with nonzero std uses the std alone.
    """
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size < 2:
        raise ValueError("bandwidth needs at least two samples")
    sigma = x.std()
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(sigma, (q75 - q25) / 1.34)
    if spread <= 0:
        if sigma > 0:
            spread = sigma
        else:
            return 1e-6 * (1.0 + abs(float(x[0]))), True
    return 0.9 * spread * x.size ** -0.2, False


@dataclass(frozen=True)
class KdeCurve:
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float
    degenerate: bool = False

    def mass(self):
        return float(np.trapezoid(self.density, self.grid))


def make_grid(lo, hi, size=GRID_SIZE):
    if not hi > lo:
        pad = 1e-6 * (1.0 + abs(lo))
        lo, hi = lo - pad, hi + pad
    return np.linspace(lo, hi, size)


def kde(samples, grid, bandwidth=None):
    """Gaussian KDE ``S(x) = 1/(N h) sum K((x - x_i) / h)`` evaluated on ``grid``.

    A degenerate sample set (all values equal) whose fallback bandwidth is
    narrower than the grid step is rendered as a unit-mass spike on the
    nearest grid point, so it still integrates to one.
    """
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size == 0:
        raise ValueError("kde needs at least one sample")
    grid = np.asarray(grid, dtype=np.float64)
    degenerate = False
    if bandwidth is None:
        bandwidth, degenerate = silverman_bandwidth(x)
    step = grid[1] - grid[0] if grid.size > 1 else 1.0
    if degenerate and bandwidth < step:
        density = np.zeros_like(grid)
        i = int(np.argmin(np.abs(grid - x[0])))
        # trapezoid weight is step/2 at the ends
        density[i] = 1.0 / step if 0 < i < grid.size - 1 else 2.0 / step
        return KdeCurve(grid, density, bandwidth, True)
    z = (grid[:, None] - x[None, :]) / bandwidth
    density = np.exp(-0.5 * z * z).sum(axis=1) / (x.size * bandwidth * math.sqrt(2 * math.pi))
    return KdeCurve(grid, density, bandwidth, degenerate)


def inter_class(curve_i, curve_j, mode="area"):
    """Overlap of two density curves on the same grid.

    ``"area"``: ``sum min / sum max`` in ``[0, 1]``.  ``"pointwise"``: sum
    over grid points of ``min / max``, skipping points where both are zero
    (unbounded; kept for comparison).
    """
    a, b = _curves(curve_i), _curves(curve_j)
    if not np.array_equal(a[0], b[0]):
        raise ValueError("curves must share one evaluation grid")
    lo = np.minimum(a[1], b[1])
    hi = np.maximum(a[1], b[1])
    if mode == "area":
        total = hi.sum()
        return float(lo.sum() / total) if total > 0 else 1.0
    if mode == "pointwise":
        nz = hi > 0
        return float((lo[nz] / hi[nz]).sum())
    raise ValueError(f"overlap mode must be one of {OVERLAP_MODES}")


def _curves(c):
    if isinstance(c, KdeCurve):
        return c.grid, c.density
    grid, density = c
    return np.asarray(grid), np.asarray(density)


def class_curves(samples_by_class, grid_size=GRID_SIZE):
    """KDE curves for one feature dimension, on a grid shared by the classes.

    The grid covers ``[min - 3 h_max, max + 3 h_max]`` of the pooled samples.
    """
    bws = [silverman_bandwidth(s) for s in samples_by_class]
    h_max = max(h for h, _ in bws)
    lo = min(float(np.min(s)) for s in samples_by_class)
    hi = max(float(np.max(s)) for s in samples_by_class)
    grid = make_grid(lo - GRID_MARGIN * h_max, hi + GRID_MARGIN * h_max, grid_size)
    curves = []
    for s, (h, degenerate) in zip(samples_by_class, bws):
        if degenerate:
            curves.append(kde(s, grid))
        else:
            curves.append(kde(s, grid, h))
    return curves


@dataclass
class VarianceReport:
    pairwise: np.ndarray
    variance: float
    dims: int
    grid_size: int = GRID_SIZE
    overlap_mode: str = "area"
    excluded: list = field(default_factory=list)

    def to_json(self):
        c = self.pairwise.shape[0]
        pairs = [
            [i, j, float(self.pairwise[i, j])]
            for i in range(c)
            for j in range(i + 1, c)
            if np.isfinite(self.pairwise[i, j])
        ]
        return json.dumps(
            {
                "pairs": pairs,
                "variance": self.variance,
                "D": self.dims,
                "grid_size": self.grid_size,
                "overlap_mode": self.overlap_mode,
            },
            indent=1,
        )


def variance_report(features_by_class, grid_size=GRID_SIZE, overlap_mode="area"):
    """Inter-class variance of per-class feature matrices (each ``(N_c, D)``).

    Classes with fewer than two samples are dropped (with a warning) and
    their pair entries are NaN.
    """
    feats = [np.asarray(f, dtype=np.float64) for f in features_by_class]
    feats = [f[:, None] if f.ndim == 1 else f for f in feats]
    dims = {f.shape[1] for f in feats}
    if len(dims) != 1:
        raise ValueError(f"classes disagree on feature dimension: {sorted(dims)}")
    d = dims.pop()
    c = len(feats)
    usable = [i for i, f in enumerate(feats) if f.shape[0] >= 2]
    excluded = [i for i in range(c) if i not in usable]
    if excluded:
        warnings.warn(f"classes {excluded} have fewer than 2 samples and are excluded")

    pairs = [(a, b) for ai, a in enumerate(usable) for b in usable[ai + 1 :]]
    per_dim = np.zeros((len(pairs), d))
    for k in range(d):
        curves = class_curves([feats[i][:, k] for i in usable], grid_size)
        by_class = dict(zip(usable, curves))
        for p, (a, b) in enumerate(pairs):
            per_dim[p, k] = inter_class(by_class[a], by_class[b], overlap_mode)

    pairwise = np.full((c, c), np.nan)
    for i in usable:
        pairwise[i, i] = 1.0
    overlaps = per_dim.sum(axis=1) / d if d else np.zeros(len(pairs))
    for p, (a, b) in enumerate(pairs):
        pairwise[a, b] = pairwise[b, a] = overlaps[p]
    variance = float(1.0 - np.sum(np.sort(overlaps)) / len(pairs)) if pairs else float("nan")
    return VarianceReport(pairwise, variance, d, grid_size, overlap_mode, excluded)


def features_by_class(features, labels, class_count):
    labels = np.asarray(labels)
    return [features[labels == c] for c in range(class_count)]
