"""Minimal binary PGM (P5) and PPM (P6) readers/writers.

Hand-rolled so that written bytes are fully deterministic: fixed header
layout, maxval 255, no comments.
"""

from __future__ import annotations

import numpy as np

from .errors import ManifestError


def write_pgm(path, array: np.ndarray) -> None:
    """Write a 2-D uint8 array as binary PGM."""
    arr = np.ascontiguousarray(array, dtype=np.uint8)
    if arr.ndim != 2:
        raise ValueError("PGM payload must be 2-D")
    h, w = arr.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(arr.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read a binary PGM into a 2-D uint8 array."""
    magic, dims, data = _read_netpbm(path, expect="P5")
    w, h = dims
    if data.size != w * h:
        raise ManifestError(f"{path}: PGM payload size mismatch")
    return data.reshape(h, w)


def write_ppm(path, array: np.ndarray) -> None:
    """Write an (H, W, 3) uint8 array as binary PPM."""
    arr = np.ascontiguousarray(array, dtype=np.uint8)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError("PPM payload must have shape (H, W, 3)")
    h, w, _ = arr.shape
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(arr.tobytes())


def read_ppm(path) -> np.ndarray:
    """Read a binary PPM into an (H, W, 3) uint8 array."""
    magic, dims, data = _read_netpbm(path, expect="P6")
    w, h = dims
    if data.size != w * h * 3:
        raise ManifestError(f"{path}: PPM payload size mismatch")
    return data.reshape(h, w, 3)


def mask_to_pgm_values(mask: np.ndarray) -> np.ndarray:
    """Binary {0,1} mask to {0,255} PGM values."""
    return (np.asarray(mask, dtype=np.uint8) * 255).astype(np.uint8)


def pgm_values_to_mask(values: np.ndarray) -> np.ndarray:
    """{0,255} PGM values back to a {0,1} mask (any nonzero is foreground)."""
    return (values > 127).astype(np.uint8)


def _read_netpbm(path, expect):
    try:
        with open(path, "rb") as f:
            raw = f.read()
    except OSError as exc:
        raise ManifestError(f"cannot read {path}: {exc}") from exc
    tokens = []
    i = 0
    # header tokens: magic, width, height, maxval; '#' comments allowed
    while len(tokens) < 4 and i < len(raw):
        c = raw[i : i + 1]
        if c.isspace():
            i += 1
        elif c == b"#":
            while i < len(raw) and raw[i : i + 1] != b"\n":
                i += 1
        else:
            j = i
            while j < len(raw) and not raw[j : j + 1].isspace():
                j += 1
            tokens.append(raw[i:j])
            i = j
    if len(tokens) < 4:
        raise ManifestError(f"{path}: truncated netpbm header")
    magic = tokens[0].decode("ascii", "replace")
    if magic != expect:
        raise ManifestError(f"{path}: expected {expect}, got {magic}")
    try:
        w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except ValueError as exc:
        raise ManifestError(f"{path}: bad netpbm header") from exc
    if maxval != 255:
        raise ManifestError(f"{path}: only maxval 255 is supported")
    data = np.frombuffer(raw[i + 1 :], dtype=np.uint8)
    return magic, (w, h), data
