"""Frequency-domain analysis of what small image classifiers learn.

Modules
-------
data        CIFAR-10 binary I/O, labeled datasets, seeding
spectral    centered DFT, radial masks, spectral density
kde         Silverman KDE and inter-class variance
hog         histogram-of-oriented-gradients features
smallnet    two-conv numpy CNN with manual backprop and SGD
priority    band gradients, learning-priority matrix, MSDA change rate
augment     HARS recombination, Mixup, CutMix
cdes        density-enhancing depthwise filters and recombined datasets
pipelines   end-to-end experiments used by the ``freqbias`` command
"""

from .data import DataError, LabeledDataset, load_cifar_binary, make_rng, save_dataset, subset
from .smallnet import NumericalError, SmallNet, TrainConfig, evaluate, train
from .spectral import SpectralDensity, decompose, dft2, idft2, make_mask, spectral_density

__all__ = [
    "DataError",
    "LabeledDataset",
    "NumericalError",
    "SmallNet",
    "SpectralDensity",
    "TrainConfig",
    "decompose",
    "dft2",
    "evaluate",
    "idft2",
    "load_cifar_binary",
    "make_mask",
    "make_rng",
    "save_dataset",
    "spectral_density",
    "subset",
    "train",
]
