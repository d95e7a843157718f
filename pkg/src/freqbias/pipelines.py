"""End-to-end experiment pipelines shared by the command line and the
acceptance checks.  Every function here is a pure function of its inputs,
configuration and seed."""

from __future__ import annotations

import glob
import os
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from scipy.stats import spearmanr

from . import cdes
from .augment import HarsConfig, batch_hook, build_hars
from .data import DataError, LabeledDataset, load_cifar_binary, make_rng, subset
from .kde import features_by_class, variance_report
from .priority import PriorityRecorder
from .smallnet import TrainConfig, evaluate, net_for, train
from .spectral import band_filter, mean_density
from .synthetic import make_synthetic

RADII = (4, 8, 12, 16)
KINDS = ("low", "high")


@dataclass
class RunConfig:
    """Everything a pipeline run depends on.

    ``seed`` drives network initialization and batch order; ``data_seed``
    picks the class-balanced subsets, so runs with different seeds see the
    same images.
    """

    seed: int = 0
    seeds: list = field(default_factory=lambda: [0, 1, 2])
    data_seed: int = 0
    per_class: int | None = 500
    test_per_class: int | None = 200
    epochs: int = 60
    learning_rate: float = 1e-2
    momentum: float = 0.9
    batch_size: int = 100
    radii: list = field(default_factory=lambda: list(RADII))
    augment: str = "none"
    alpha: float = 1.0
    variant: str = "hars"
    hars_radius: float = 12
    cdes_peak_band: float = 13
    cdes_peak_width: float = 1.5
    cdes_peak_height: float = 0.05
    cdes_beta: float = 1.0
    cdes_iterations: int = 2000
    cdes_learning_rate: float = 1e-2
    cdes_optimizer: str = "adam"
    kde_grid: int = 256
    overlap_mode: str = "area"
    data_dir: str | None = None
    train: list = field(default_factory=list)
    test: list = field(default_factory=list)
    synthetic: bool = False

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - names)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**d)

    def to_dict(self):
        return asdict(self)

    def train_config(self, seed=None):
        return TrainConfig(
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            momentum=self.momentum,
            batch_size=self.batch_size,
            seed=self.seed if seed is None else seed,
        )

    def fit_config(self, seed=None):
        return cdes.FitConfig(
            iterations=self.cdes_iterations,
            learning_rate=self.cdes_learning_rate,
            optimizer=self.cdes_optimizer,
            beta=self.cdes_beta,
            seed=self.seed if seed is None else seed,
        )


def check_radii(radii, side=32):
    radii = [int(r) for r in radii]
    if not radii:
        raise ValueError("radius list is empty")
    bad = [r for r in radii if not 0 <= r <= side // 2]
    if bad:
        raise ValueError(f"radii {bad} outside [0, {side // 2}]")
    return radii


# ---------------------------------------------------------------------------
# data


def cifar_files(directory):
    """``(train batch paths, test batch path)`` inside a CIFAR-10 binary directory."""
    train = sorted(glob.glob(os.path.join(directory, "data_batch_*.bin")))
    test = os.path.join(directory, "test_batch.bin")
    if not train or not os.path.exists(test):
        raise DataError(f"{directory}: expected data_batch_*.bin and test_batch.bin")
    return train, test


def load_splits(config):
    """Train and test subsets described by ``config``."""
    if config.synthetic:
        tr = make_synthetic(config.per_class or 500, seed=config.data_seed, split_tag="train")
        te = make_synthetic(config.test_per_class or 200, seed=config.data_seed + 10_000, split_tag="test")
        return tr, te
    if config.data_dir:
        train_paths, test_path = cifar_files(config.data_dir)
        test_paths = [test_path]
    else:
        train_paths, test_paths = list(config.train), list(config.test)
    if not train_paths or not test_paths:
        raise DataError("no input data: give --data-dir, --train/--test or --synthetic")
    tr = load_cifar_binary(train_paths, "train")
    te = load_cifar_binary(test_paths, "test")
    tr = subset(tr, config.per_class, make_rng((config.data_seed, 1)))
    te = subset(te, config.test_per_class, make_rng((config.data_seed, 2)))
    return tr, te


# ---------------------------------------------------------------------------
# decomposition and densities


def decompose_dataset(dataset, radii):
    """``{(kind, r): dataset}`` with every image low- or high-passed at ``r``."""
    radii = check_radii(radii, dataset.side)
    return {(kind, r): dataset.with_images(band_filter(dataset.images, kind, r)) for r in radii for kind in KINDS}


def density_table(dataset, by_class=False, normalization="sum1"):
    """Mean spectral density of ``dataset``, optionally one curve per class."""
    out = {"all": mean_density(dataset.images, normalization)}
    if by_class:
        for c in range(dataset.class_count):
            idx = np.flatnonzero(dataset.labels == c)
            if idx.size:
                out[c] = mean_density(dataset.images[idx], normalization)
    return out


# ---------------------------------------------------------------------------
# training-based pipelines


def fit(train_set, config, seed, test_set=None, augment="none", record_priority=None):
    """Train a fresh network; returns ``(net, log, priority or None)``."""
    net = net_for(train_set, seed=seed)
    rec = PriorityRecorder(record_priority) if record_priority is not None else None
    log = train(
        net,
        train_set,
        config.train_config(seed),
        test_set=test_set,
        augment=batch_hook(augment, config.alpha),
        epoch_hook=rec,
    )
    return net, log, rec.matrix() if rec is not None else None


def spearman(x, y):
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        return float("nan")
    return float(spearmanr(x, y).statistic)


@dataclass
class BiasReport:
    rows: list
    spearman: float
    clean_accuracy: float
    log: object = None
    priority: object = None
    net: object = None

    def to_csv(self):
        lines = ["kind,r,accuracy,variance"]
        lines += [f"{r['kind']},{r['r']},{r['accuracy']!r},{r['variance']!r}" for r in self.rows]
        return "\n".join(lines) + "\n"

    def lookup(self, kind, r, key):
        return next(row[key] for row in self.rows if row["kind"] == kind and row["r"] == r)


def band_scores(net, test_set, radii, grid_size=256, overlap_mode="area"):
    """Accuracy and penultimate-feature inter-class variance per ``(kind, r)``."""
    rows = []
    for r in check_radii(radii, test_set.side):
        for kind in KINDS:
            images = band_filter(test_set.images, kind, r)
            acc = float(np.mean(net.predict_logits(images).argmax(axis=1) == test_set.labels))
            feats = features_by_class(net.features(images), test_set.labels, test_set.class_count)
            rep = variance_report(feats, grid_size, overlap_mode)
            rows.append({"kind": kind, "r": r, "accuracy": acc, "variance": rep.variance})
    return rows


def bias_report(train_set, test_set, config, seed=None, record_priority=False):
    """Train once on clean data and score every band-filtered test set."""
    seed = config.seed if seed is None else seed
    net, log, prio = fit(train_set, config, seed, test_set, record_priority=test_set if record_priority else None)
    rows = band_scores(net, test_set, config.radii, config.kde_grid, config.overlap_mode)
    rho = spearman([r["variance"] for r in rows], [r["accuracy"] for r in rows])
    return BiasReport(rows, rho, evaluate(net, test_set), log, prio, net)


def priority_run(train_set, test_set, config, augment="none", seed=None):
    """Per-epoch learning-priority matrix and epoch log."""
    seed = config.seed if seed is None else seed
    _, log, prio = fit(train_set, config, seed, test_set, augment=augment, record_priority=test_set)
    return prio, log


def compare(models, config, seeds=None, radii=None):
    """Train on every ``name -> (train set, test set)`` and score band-filtered tests.

    Returns per-seed rows and a mean/std summary over seeds.
    """
    seeds = list(config.seeds if seeds is None else seeds)
    radii = check_radii(config.radii if radii is None else radii)
    per_seed = []
    for name, (tr, te) in models.items():
        for s in seeds:
            net, _, _ = fit(tr, config, s)
            per_seed.append({"model": name, "seed": s, "kind": "clean", "r": -1, "accuracy": evaluate(net, te)})
            for r in radii:
                for kind in KINDS:
                    per_seed.append(
                        {"model": name, "seed": s, "kind": kind, "r": r, "accuracy": evaluate(net, te, (kind, r))}
                    )
    summary = []
    keys = []
    for row in per_seed:
        k = (row["model"], row["kind"], row["r"])
        if k not in keys:
            keys.append(k)
    for k in keys:
        accs = np.array([row["accuracy"] for row in per_seed if (row["model"], row["kind"], row["r"]) == k])
        summary.append({"model": k[0], "kind": k[1], "r": k[2], "mean": float(accs.mean()), "std": float(accs.std())})
    return per_seed, summary


def compare_csv(per_seed, summary):
    a = ["model,seed,kind,r,accuracy"] + [
        f"{r['model']},{r['seed']},{r['kind']},{r['r']},{r['accuracy']!r}" for r in per_seed
    ]
    b = ["model,kind,r,mean,std"] + [
        f"{r['model']},{r['kind']},{r['r']},{r['mean']!r},{r['std']!r}" for r in summary
    ]
    return "\n".join(a) + "\n", "\n".join(b) + "\n"


def summary_value(summary, model, kind, r):
    return next(s["mean"] for s in summary if s["model"] == model and s["kind"] == kind and s["r"] == r)


# ---------------------------------------------------------------------------
# dataset variants


@dataclass
class BuiltVariant:
    name: str
    train: LabeledDataset
    test: LabeledDataset
    manifest: dict
    filters: dict = field(default_factory=dict)


def build_variant(variant, train_set, test_set, config, seed=None):
    """HARS or CDES variant of the training set (and of the test set for CDES).

    HARS leaves the test split clean; CDES recombines both splits with the
    same filters, as the two variants are compared on their own test sets.
    """
    seed = config.seed if seed is None else seed
    if variant == "hars":
        hc = HarsConfig(config.hars_radius, seed)
        built, manifest = build_hars(train_set, hc)
        return BuiltVariant(variant, built, test_set, manifest)
    if variant not in ("cdes-wcr", "cdes-scr"):
        raise ValueError(f"unknown variant {variant!r}")
    mode = variant.split("-")[1]
    target = cdes.make_target(
        cdes.dataset_density(train_set.images),
        config.cdes_peak_band,
        config.cdes_peak_width,
        config.cdes_peak_height,
    )
    fc = config.fit_config(seed)
    if mode == "wcr":
        group, _ = cdes.fit_filters(train_set.images, target, fc, scope="shared")
        filters = {"shared": group}
        arg = group
    else:
        filters = {}
        for c in range(train_set.class_count):
            idx = np.flatnonzero(train_set.labels == c)
            filters[c], _ = cdes.fit_filters(train_set.images[idx], target, fc, scope="per-class", label=c)
        arg = filters
    tr, manifest = cdes.build_cdes_dataset(train_set, mode, target, arg)
    te, _ = cdes.build_cdes_dataset(test_set, mode, target, arg)
    manifest.update(
        {
            "seed": seed,
            "fit": cdes.fit_config_dict(fc),
            "target_values": target.values.tolist(),
            "test_size": len(te),
        }
    )
    return BuiltVariant(variant, tr, te, manifest, filters)


def low_band_error(original, built, r):
    """Max-abs difference of the low bands at ``r`` (zero for CDES by construction)."""
    return float(np.max(np.abs(band_filter(built.images, "low", r) - band_filter(original.images, "low", r))))


def high_band_error(original, built, r):
    return float(np.max(np.abs(band_filter(built.images, "high", r) - band_filter(original.images, "high", r))))
