"""Histogram of oriented gradients, used as the pre-CNN feature baseline."""

import numpy as np

from .data import to_gray

CELL = 8
BLOCK = 2
BINS = 9
EPS = 1e-5


def hog_features(image, cell=CELL, block=BLOCK, bins=BINS, eps=EPS):
    """HOG descriptor of a ``(C, H, W)`` or ``(H, W)`` image.

    Central-difference gradients on an edge-replicated border, unsigned
    orientation in ``[0, 180)`` voted into ``bins`` bins centered at
    multiples of ``180 / bins`` degrees (linear interpolation between the two
    nearest centers), ``block x block`` cell blocks with stride one cell, each
    L2-normalized as ``v / sqrt(|v|^2 + eps^2)``.
    """
    gray = to_gray(image)
    h, w = gray.shape
    cy, cx = h // cell, w // cell
    if cy < block or cx < block:
        raise ValueError(f"image {h}x{w} is smaller than one {block}x{block} block of {cell}px cells")

    padded = np.pad(gray, 1, mode="edge")
    gx = (padded[1:-1, 2:] - padded[1:-1, :-2]) / 2.0
    gy = (padded[2:, 1:-1] - padded[:-2, 1:-1]) / 2.0
    mag = np.hypot(gx, gy)
    angle = np.rad2deg(np.arctan2(gy, gx)) % 180.0

    width = 180.0 / bins
    pos = angle / width
    lo = np.floor(pos).astype(np.int64)
    frac = pos - lo
    lo %= bins
    hi = (lo + 1) % bins

    hist = np.zeros((cy, cx, bins))
    rows = np.repeat(np.arange(cy), cell)
    cols = np.repeat(np.arange(cx), cell)
    mag = mag[: cy * cell, : cx * cell]
    r = np.broadcast_to(rows[:, None], mag.shape)
    c = np.broadcast_to(cols[None, :], mag.shape)
    np.add.at(hist, (r, c, lo[: cy * cell, : cx * cell]), mag * (1 - frac[: cy * cell, : cx * cell]))
    np.add.at(hist, (r, c, hi[: cy * cell, : cx * cell]), mag * frac[: cy * cell, : cx * cell])

    blocks = []
    for by in range(cy - block + 1):
        for bx in range(cx - block + 1):
            v = hist[by : by + block, bx : bx + block].ravel()
            blocks.append(v / np.sqrt(np.dot(v, v) + eps * eps))
    return np.concatenate(blocks)


def hog_dataset(images):
    return np.stack([hog_features(x) for x in images])
