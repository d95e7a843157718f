"""A small float64 CNN with hand-written backpropagation.

Architecture (defaults for 32x32 RGB, 10 classes)::

    normalize -> conv3x3(3->16) -> relu -> maxpool2
              -> conv3x3(16->32) -> relu -> maxpool2
              -> flatten(2048) -> dense(64) -> relu   [penultimate features]
              -> dense(C)                             [logits]

The normalization is a fixed per-channel affine map ``(x - mean) / std``
whose constants come from the training split.  Input gradients are taken
with respect to the raw (un-normalized) image.
"""

from __future__ import annotations

import copy
import csv
import io
import json
import struct
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .data import make_rng
from .spectral import band_filter

PARAM_ORDER = ("conv1_w", "conv1_b", "conv2_w", "conv2_b", "fc1_w", "fc1_b", "fc2_w", "fc2_b")
FEATURE_PARAMS = PARAM_ORDER[:6]
CLASSIFIER_PARAMS = PARAM_ORDER[6:]


class NumericalError(RuntimeError):
    """Raised when training or fitting produces a non-finite loss."""


# ---------------------------------------------------------------------------
# layer primitives


def conv_forward(x, w, b):
    """Stride-1 convolution with zero 'same' padding on NHWC input.

    ``w`` has shape ``(F, C, k, k)``.  Returns the NHWC output and the
    im2col matrix needed by :func:`conv_backward`.
    """
    n, h, wd, c = x.shape
    f, _, k, _ = w.shape
    p = k // 2
    xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)))
    cols = sliding_window_view(xp, (k, k), axis=(1, 2)).transpose(0, 1, 2, 4, 5, 3).reshape(n * h * wd, k * k * c)
    out = cols @ _as_matrix(w) + b
    return out.reshape(n, h, wd, f), cols


def conv_backward(dout, cols, x_shape, w, need_dx=True):
    n, h, wd, c = x_shape
    f, _, k, _ = w.shape
    p = k // 2
    d2 = dout.reshape(-1, f)
    dw = (cols.T @ d2).reshape(k, k, c, f).transpose(3, 2, 0, 1)
    db = d2.sum(axis=0)
    if not need_dx:
        return None, dw, db
    dcols = (d2 @ _as_matrix(w).T).reshape(n, h, wd, k, k, c)
    dxp = np.zeros((n, h + 2 * p, wd + 2 * p, c))
    for a in range(k):
        for b_ in range(k):
            dxp[:, a : a + h, b_ : b_ + wd, :] += dcols[:, :, :, a, b_, :]
    return dxp[:, p : p + h, p : p + wd, :], dw, db


def _as_matrix(w):
    f, c, k, _ = w.shape
    return w.transpose(2, 3, 1, 0).reshape(k * k * c, f)


_QUADS = ((0, 0), (0, 1), (1, 0), (1, 1))


def pool_forward(x):
    """2x2 max pooling on NHWC input.

    Ties route the gradient to the first maximum in row-major window order.
    """
    parts = [x[:, i::2, j::2, :] for i, j in _QUADS]
    out = np.maximum(np.maximum(parts[0], parts[1]), np.maximum(parts[2], parts[3]))
    taken = np.zeros(out.shape, dtype=bool)
    masks = []
    for part in parts:
        m = (part == out) & ~taken
        taken |= m
        masks.append(m)
    return out, masks


def pool_backward(dout, masks, x_shape):
    dx = np.zeros(x_shape)
    for (i, j), m in zip(_QUADS, masks):
        dx[:, i::2, j::2, :] = dout * m
    return dx


def softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def one_hot(labels, classes):
    out = np.zeros((len(labels), classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def as_targets(labels_or_targets, classes):
    t = np.asarray(labels_or_targets)
    if t.ndim == 1:
        return one_hot(t.astype(np.int64), classes)
    return t.astype(np.float64)


def cross_entropy(logits, targets, reduction="mean"):
    """Softmax cross-entropy against hard labels or soft target rows.

    Returns ``(loss, dlogits)`` where ``dlogits`` is the gradient of the
    reduced loss.
    """
    targets = as_targets(targets, logits.shape[1])
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    per_sample = -(targets * logp).sum(axis=1)
    grad = np.exp(logp) - targets
    if reduction == "mean":
        return float(per_sample.mean()), grad / logits.shape[0]
    if reduction == "sum":
        return float(per_sample.sum()), grad
    raise ValueError(f"unknown reduction {reduction!r}")


# ---------------------------------------------------------------------------
# network


class SmallNet:
    def __init__(self, in_channels=3, side=32, widths=(16, 32), hidden=64, classes=10, seed=0, kernel=3):
        if side % 4:
            raise ValueError("side must be divisible by 4 (two 2x2 poolings)")
        self.in_channels = in_channels
        self.side = side
        self.widths = tuple(widths)
        self.hidden = hidden
        self.classes = classes
        self.kernel = kernel
        self.norm_mean = np.zeros(in_channels)
        self.norm_std = np.ones(in_channels)
        rng = make_rng(seed)
        c1, c2 = self.widths
        flat = c2 * (side // 4) ** 2
        self.params = {
            "conv1_w": _kaiming((c1, in_channels, kernel, kernel), rng),
            "conv1_b": np.zeros(c1),
            "conv2_w": _kaiming((c2, c1, kernel, kernel), rng),
            "conv2_b": np.zeros(c2),
            "fc1_w": _kaiming((flat, hidden), rng, fan_in=flat),
            "fc1_b": np.zeros(hidden),
            "fc2_w": _kaiming((hidden, classes), rng, fan_in=hidden),
            "fc2_b": np.zeros(classes),
        }

    @property
    def feature_dim(self):
        return self.hidden

    def copy(self):
        return copy.deepcopy(self)

    def set_normalization(self, mean, std):
        self.norm_mean = np.asarray(mean, dtype=np.float64).reshape(self.in_channels)
        self.norm_std = np.asarray(std, dtype=np.float64).reshape(self.in_channels)

    def fit_normalization(self, images):
        images = np.asarray(images)
        std = images.std(axis=(0, 2, 3))
        self.set_normalization(images.mean(axis=(0, 2, 3)), np.where(std > 0, std, 1.0))

    def _check(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 3:
            x = x[None]
        if x.shape[1:] != (self.in_channels, self.side, self.side):
            raise ValueError(
                f"input shape {x.shape[1:]} does not match network ({self.in_channels}, {self.side}, {self.side})"
            )
        return x

    def forward(self, x, keep_cache=False):
        """Return ``(logits, features)`` for a batch ``(N, C, H, W)``."""
        x = self._check(x)
        p = self.params
        xn = ((x - self.norm_mean[:, None, None]) / self.norm_std[:, None, None]).transpose(0, 2, 3, 1)
        a1, cols1 = conv_forward(xn, p["conv1_w"], p["conv1_b"])
        p1, m1 = pool_forward(np.maximum(a1, 0))
        a2, cols2 = conv_forward(p1, p["conv2_w"], p["conv2_b"])
        p2, m2 = pool_forward(np.maximum(a2, 0))
        flat = p2.reshape(len(x), -1)
        h = flat @ p["fc1_w"] + p["fc1_b"]
        feats = np.maximum(h, 0)
        logits = feats @ p["fc2_w"] + p["fc2_b"]
        if keep_cache:
            cache = dict(
                xn_shape=xn.shape, cols1=cols1, a1=a1, m1=m1, p1_shape=p1.shape,
                cols2=cols2, a2=a2, m2=m2, p2_shape=p2.shape, flat=flat, h=h, feats=feats,
            )
            return logits, feats, cache
        return logits, feats

    def backward(self, x, targets, reduction="mean", need_input_grad=True):
        """Loss, parameter gradients and ``dL/dX`` (w.r.t. the raw input).

        ``dL/dX`` is None when ``need_input_grad`` is false.
        """
        p = self.params
        logits, _, c = self.forward(x, keep_cache=True)
        loss, dz = cross_entropy(logits, targets, reduction)
        g = {}
        g["fc2_w"] = c["feats"].T @ dz
        g["fc2_b"] = dz.sum(axis=0)
        dh = (dz @ p["fc2_w"].T) * (c["h"] > 0)
        g["fc1_w"] = c["flat"].T @ dh
        g["fc1_b"] = dh.sum(axis=0)
        dp2 = (dh @ p["fc1_w"].T).reshape(c["p2_shape"])
        da2 = pool_backward(dp2, c["m2"], c["a2"].shape) * (c["a2"] > 0)
        dp1, g["conv2_w"], g["conv2_b"] = conv_backward(da2, c["cols2"], c["p1_shape"], p["conv2_w"])
        da1 = pool_backward(dp1, c["m1"], c["a1"].shape) * (c["a1"] > 0)
        dxn, g["conv1_w"], g["conv1_b"] = conv_backward(
            da1, c["cols1"], c["xn_shape"], p["conv1_w"], need_dx=need_input_grad
        )
        dx = None
        if need_input_grad:
            dx = dxn.transpose(0, 3, 1, 2) / self.norm_std[:, None, None]
        return loss, g, dx

    def loss(self, x, targets, reduction="mean"):
        logits, _ = self.forward(x)
        return cross_entropy(logits, targets, reduction)[0]

    def input_gradients(self, x, labels, batch_size=250):
        """Per-image ``dL_i/dX_i`` (each image's own loss), shape like ``x``."""
        x = self._check(x)
        out = np.empty_like(x)
        for s in range(0, len(x), batch_size):
            _, _, dx = self.backward(x[s : s + batch_size], labels[s : s + batch_size], reduction="sum")
            out[s : s + batch_size] = dx
        return out

    def predict_logits(self, x, batch_size=500):
        x = self._check(x)
        return np.concatenate([self.forward(x[s : s + batch_size])[0] for s in range(0, len(x), batch_size)])

    def features(self, x, batch_size=500):
        x = self._check(x)
        return np.concatenate([self.forward(x[s : s + batch_size])[1] for s in range(0, len(x), batch_size)])

    # -- persistence ---------------------------------------------------------

    def manifest(self):
        return {
            "version": BLOB_VERSION,
            "in_channels": self.in_channels,
            "side": self.side,
            "widths": list(self.widths),
            "hidden": self.hidden,
            "classes": self.classes,
            "kernel": self.kernel,
            "layers": [[name, list(self.params[name].shape)] for name in PARAM_ORDER],
        }

    def to_bytes(self):
        head = json.dumps(self.manifest(), sort_keys=True).encode()
        body = [np.ascontiguousarray(self.norm_mean, "<f8").tobytes(), np.ascontiguousarray(self.norm_std, "<f8").tobytes()]
        body += [np.ascontiguousarray(self.params[n], "<f8").tobytes() for n in PARAM_ORDER]
        return BLOB_MAGIC + struct.pack("<II", BLOB_VERSION, len(head)) + head + b"".join(body)

    @classmethod
    def from_bytes(cls, blob):
        if blob[:4] != BLOB_MAGIC:
            raise ValueError("not a smallnet parameter blob")
        version, n = struct.unpack("<II", blob[4:12])
        if version != BLOB_VERSION:
            raise ValueError(f"unsupported blob version {version}")
        man = json.loads(blob[12 : 12 + n])
        net = cls(man["in_channels"], man["side"], man["widths"], man["hidden"], man["classes"], kernel=man["kernel"])
        off = 12 + n

        def take(shape):
            nonlocal off
            count = int(np.prod(shape))
            a = np.frombuffer(blob, "<f8", count, off).reshape(shape).copy()
            off += 8 * count
            return a

        net.set_normalization(take((net.in_channels,)), take((net.in_channels,)))
        for name, shape in man["layers"]:
            net.params[name] = take(tuple(shape))
        return net

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


BLOB_MAGIC = b"FQBN"
BLOB_VERSION = 1


def _kaiming(shape, rng, fan_in=None):
    if fan_in is None:
        fan_in = int(np.prod(shape[1:]))
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def net_for(dataset, seed=0, **kw):
    """Network sized for ``dataset`` with normalization fitted on its images."""
    net = SmallNet(dataset.channels, dataset.side, classes=dataset.class_count, seed=seed, **kw)
    net.fit_normalization(dataset.images)
    return net


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainConfig:
    epochs: int = 60
    learning_rate: float = 1e-2
    momentum: float = 0.9
    batch_size: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size <= 0 or self.learning_rate < 0 or not 0 <= self.momentum < 1:
            raise ValueError(f"invalid training configuration {self}")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    test_acc: float


@dataclass
class TrainLog:
    records: list = field(default_factory=list)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "test_acc"])
        for r in self.records:
            w.writerow([r.epoch, repr(r.train_loss), repr(r.test_acc)])
        return buf.getvalue()


def train(net, dataset, config, test_set=None, augment=None, epoch_hook=None):
    """SGD with momentum (``v <- mu v - lr g``; ``theta <- theta + v``).

    ``augment(images, targets, rng) -> (images, targets)`` is applied to each
    mini-batch; ``epoch_hook(epoch, net)`` runs after every epoch (epochs are
    numbered from 1).  Updates ``net`` in place and returns the epoch log.
    """
    rng = make_rng(config.seed)
    velocity = {k: np.zeros_like(v) for k, v in net.params.items()}
    targets_all = one_hot(dataset.labels, net.classes)
    log = TrainLog()
    n = len(dataset)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        losses = []
        for s in range(0, n, config.batch_size):
            idx = order[s : s + config.batch_size]
            xb, tb = dataset.images[idx], targets_all[idx]
            if augment is not None:
                xb, tb = augment(xb, tb, rng)
            loss, grads, _ = net.backward(xb, tb, need_input_grad=False)
            if not np.isfinite(loss):
                raise NumericalError(f"non-finite training loss at epoch {epoch}")
            losses.append(loss)
            for k in PARAM_ORDER:
                v = velocity[k]
                v *= config.momentum
                v -= config.learning_rate * grads[k]
                net.params[k] += v
        acc = evaluate(net, test_set) if test_set is not None else float("nan")
        log.records.append(EpochRecord(epoch, float(np.mean(losses)) if losses else float("nan"), acc))
        if epoch_hook is not None:
            epoch_hook(epoch, net)
    return log


def evaluate(net, dataset, band=None):
    """Accuracy on ``dataset``; ``band=(kind, r)`` low/high-passes each image first."""
    images = dataset.images
    if band is not None:
        kind, r = band
        images = band_filter(images, kind, r)
    pred = net.predict_logits(images).argmax(axis=1)
    return float(np.mean(pred == dataset.labels))
