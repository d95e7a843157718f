"""Centered spectra, radial masks and the reduced spectrum of an image set.

Run with ``python demos/01_spectrum_and_masks.py``.
"""

# %%
import numpy as np

from freqbias.spectral import decompose, dft2, idft2, make_mask, mean_density, ring_masks
from freqbias.synthetic import make_synthetic

data = make_synthetic(20, seed=0)
x = data.images[0]
print("image", x.shape, "range", x.min().round(3), x.max().round(3))

# %% The DC coefficient is the image mean, and the transform inverts exactly.
spec = dft2(x)
print("DC per channel", spec[:, 16, 16].real.round(4), "vs mean", x.mean(axis=(1, 2)).round(4))
print("round-trip error", np.abs(idft2(spec) - x).max())

# %% Masks. A ring is the set difference of two consecutive low-pass discs.
for r in (0, 4, 8, 16):
    print(f"r={r:2d}: low-pass keeps {make_mask(32, kind='low', r=r).sum():4d} of 1024 frequencies")
rings = ring_masks(32)
print("ring sizes", rings.sum(axis=(1, 2)).tolist())

# %% Low + high always gives the image back.
lo, hi = decompose(x, 8)
print("low std", lo.std().round(4), "high std", hi.std().round(4), "sum error", np.abs(lo + hi - x).max())

# %% Reduced spectrum of the whole set, on a log scale.
dens = mean_density(data.images).values
for k, v in enumerate(dens):
    print(f"k={k:2d} {'#' * int(max(0, 40 + 4 * np.log10(v)))} {v:.2e}")
