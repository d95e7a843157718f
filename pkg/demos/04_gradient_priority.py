"""Where in the spectrum does the input gradient live, epoch by epoch?

Run with ``python demos/04_gradient_priority.py``; writes ``priority.pgm``
to the working directory.
"""

# %%
import numpy as np

from freqbias.pipelines import RunConfig, load_splits, priority_run
from freqbias.priority import band_gradients, msda_change_rate
from freqbias.smallnet import net_for

cfg = RunConfig(synthetic=True, per_class=60, test_per_class=20, epochs=6)
train_set, test_set = load_splits(cfg)

# %% Band gradients of one image split the gradient map exactly.
net = net_for(train_set, seed=0)
g = net.input_gradients(test_set.images[:1], test_set.labels[:1])[0]
parts = band_gradients(g)
print("bands + corner:", parts.shape[0], " reconstruction error:", np.abs(parts.sum(axis=0) - g).max())

# %% Learning priority over training, with and without Mixup.
base, _ = priority_run(train_set, test_set, cfg)
mixed, _ = priority_run(train_set, test_set, cfg, augment="mixup")
np.set_printoptions(precision=2, linewidth=140)
print("peak band per epoch:", base.argmax_bands().tolist())
print(base.values)
print("Mixup change rate:", msda_change_rate(mixed, base, slice(-2, None)))

with open("priority.pgm", "wb") as fh:
    fh.write(base.to_pgm())
