"""How separable are classes, band by band?  HOG features of low- and
high-passed images scored with the KDE overlap measure.

Run with ``python demos/02_features_and_overlap.py``.
"""

# %%
import numpy as np

from freqbias.hog import hog_dataset
from freqbias.kde import class_curves, features_by_class, inter_class, variance_report
from freqbias.spectral import band_filter
from freqbias.synthetic import make_synthetic

data = make_synthetic(30, seed=1)

# %% One feature dimension, two classes: the overlap is the IoU of the two curves.
f = hog_dataset(data.images)
a, b = f[data.labels == 0, 0], f[data.labels == 1, 0]
ca, cb = class_curves([a, b])
print("bandwidths", round(ca.bandwidth, 4), round(cb.bandwidth, 4), "overlap", round(inter_class(ca, cb), 3))

# %% Inter-class variance of HOG features for every band-filtered version.
for r in (4, 8, 12, 16):
    row = []
    for kind in ("low", "high"):
        feats = hog_dataset(band_filter(data.images, kind, r))
        rep = variance_report(features_by_class(feats, data.labels, data.class_count))
        row.append(f"{kind} {rep.variance:.3f}")
    print(f"r={r:2d}", "  ".join(row))

# %% Pairwise table for the unfiltered images.
rep = variance_report(features_by_class(f, data.labels, data.class_count))
np.set_printoptions(precision=2, suppress=True, linewidth=120)
print(rep.pairwise)
