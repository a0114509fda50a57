"""Pure-numpy implementations of the hot kernels.

These mirror the compiled extension in ``_kernels.pyx`` one-to-one; the
active implementation is chosen in ``_backend``. Morphology is bit-exact
across backends; the dense float kernels agree to accumulation rounding.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

BACKEND_NAME = "python"


def erode(mask, offsets):
    """Minimum over structuring-element offsets; outside the frame counts as 0."""
    h, w = mask.shape
    if len(offsets) == 0:
        return mask.copy()
    r = int(np.abs(offsets).max())
    padded = np.zeros((h + 2 * r, w + 2 * r), dtype=np.uint8)
    padded[r : r + h, r : r + w] = mask
    out = np.ones((h, w), dtype=np.uint8)
    for dy, dx in offsets:
        np.minimum(out, padded[r + dy : r + dy + h, r + dx : r + dx + w], out=out)
    return out


def dilate(mask, offsets):
    """Maximum over structuring-element offsets; outside the frame counts as 0."""
    h, w = mask.shape
    if len(offsets) == 0:
        return mask.copy()
    r = int(np.abs(offsets).max())
    padded = np.zeros((h + 2 * r, w + 2 * r), dtype=np.uint8)
    padded[r : r + h, r : r + w] = mask
    out = np.zeros((h, w), dtype=np.uint8)
    for dy, dx in offsets:
        np.maximum(out, padded[r + dy : r + dy + h, r + dx : r + dx + w], out=out)
    return out


def patch_features(image, half):
    """Per-pixel feature rows: flattened edge-clamped patch plus normalized x, y.

    Pixel order is row-major; feature order is the patch in row-major window
    order followed by x/(W-1) and y/(H-1).
    """
    h, w = image.shape
    k = 2 * half + 1
    padded = np.pad(image, half, mode="edge")
    windows = sliding_window_view(padded, (k, k)).reshape(h * w, k * k)
    out = np.empty((h * w, k * k + 2), dtype=np.float64)
    out[:, : k * k] = windows
    xs = np.arange(w, dtype=np.float64) / max(w - 1, 1)
    ys = np.arange(h, dtype=np.float64) / max(h - 1, 1)
    out[:, k * k] = np.tile(xs, h)
    out[:, k * k + 1] = np.repeat(ys, w)
    return out


def forward_dense(X, W1, b1, gamma, beta, w2, b2):
    """One-hidden-layer forward pass with per-channel affine modulation.

    Returns (probabilities, hidden) where hidden is the pre-modulation
    relu activation matrix of shape (n_pixels, hidden_dim).
    """
    hidden = np.maximum(X @ W1.T + b1, 0.0)
    z = (hidden * gamma + beta) @ w2 + b2
    # numerically safe sigmoid
    p = np.empty_like(z)
    pos = z >= 0
    p[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    p[~pos] = ez / (1.0 + ez)
    return p, hidden


def backward_dense(X, hidden, gamma, beta, w2, gz, ghid):
    """Backward pass given per-pixel logit gradients gz and a per-image
    uniform hidden-state gradient ghid (already divided by pixel count).

    Returns (dW1, db1, dgamma, dbeta, dw2, db2).
    """
    s0 = gz.sum()
    s1 = gz @ hidden
    db2 = s0
    dw2 = gamma * s1 + beta * s0
    dgamma = w2 * s1
    dbeta = w2 * s0
    delta = (np.outer(gz, w2 * gamma) + ghid) * (hidden > 0)
    db1 = delta.sum(axis=0)
    dW1 = delta.T @ X
    return dW1, db1, dgamma, dbeta, dw2, db2
