"""Low band from one class, high band from another (HARS), and the two
mixed-sample batch transforms.

Run with ``python demos/05_recombination_and_mixing.py``.
"""

# %%
import numpy as np

from freqbias.augment import HarsConfig, build_hars, cutmix, mixup
from freqbias.data import make_rng
from freqbias.smallnet import one_hot
from freqbias.spectral import band_filter
from freqbias.synthetic import make_synthetic

data = make_synthetic(10, seed=2)

# %% HARS keeps each label and its high band; the low band comes from another class.
built, manifest = build_hars(data, HarsConfig(radius=12, seed=0))
p = np.array(manifest["partners"])
print("partner classes differ:", bool((data.labels[p] != data.labels).all()))
print("high-band change:", np.abs(band_filter(built.images, "high", 12) - band_filter(data.images, "high", 12)).max())
print("low band now matches partner:",
      np.abs(band_filter(built.images, "low", 12) - band_filter(data.images[p], "low", 12)).max())

# %% Mixup and CutMix on a batch of four.
rng = make_rng(0)
x, t = data.images[:4], one_hot(data.labels[:4], 10)
mb = mixup(x, t, 1.0, rng)
print("mixup lambda", mb.lam[0].round(3), "targets\n", mb.targets.round(2))
cb = cutmix(x, t, 1.0, rng)
print("cutmix kept fraction", cb.lam[0].round(3), "targets\n", cb.targets.round(2))
