"""Binary-mask morphology and geometry primitives.

Masks are 2-D uint8 arrays with values in {0, 1}, 1 = foreground. All
operations treat pixels outside the image frame as background, which
preserves erosion/dilation duality and keeps masks inside the frame.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from ._backend import kernels
from .errors import DegenerateMaskError

__all__ = [
    "as_mask",
    "disk_offsets",
    "erode",
    "dilate",
    "boundary_band",
    "signed_distance",
    "harmonic_deform",
]

# frequency range for harmonic boundary deformation, radians per pixel
HBD_OMEGA_LOW = 2.0 * np.pi / 64.0
HBD_OMEGA_HIGH = 2.0 * np.pi / 16.0


def as_mask(mask) -> np.ndarray:
    """Validate and coerce an array-like into a binary uint8 mask."""
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {arr.shape}")
    if arr.dtype == bool:
        return arr.astype(np.uint8)
    arr = arr.astype(np.uint8, copy=False)
    if arr.size and arr.max() > 1:
        raise ValueError("mask values must be in {0, 1}")
    return arr


def disk_offsets(radius: int) -> np.ndarray:
    """Offsets (dy, dx) of the discrete Euclidean disk dy^2 + dx^2 <= r^2."""
    r = int(radius)
    if r < 0:
        raise ValueError("radius must be >= 0")
    span = np.arange(-r, r + 1)
    dy, dx = np.meshgrid(span, span, indexing="ij")
    keep = dy * dy + dx * dx <= r * r
    return np.stack([dy[keep], dx[keep]], axis=1).astype(np.int64)


def erode(mask, radius: int) -> np.ndarray:
    """Erosion by the radius-r disk; shrinks foreground, identity at r=0."""
    m = as_mask(mask)
    if radius == 0:
        return m.copy()
    return kernels.erode(m, disk_offsets(radius))


def dilate(mask, radius: int) -> np.ndarray:
    """Dilation by the radius-r disk; grows foreground, identity at r=0."""
    m = as_mask(mask)
    if radius == 0:
        return m.copy()
    return kernels.dilate(m, disk_offsets(radius))


def boundary_band(mask, width: int) -> np.ndarray:
    """Morphological gradient: dilate(mask, w) minus erode(mask, w).

    Contains every pixel within ``width`` of the foreground/background
    boundary, including the frame-induced ring on masks touching the edge.
    """
    if width < 1:
        raise ValueError("band width must be >= 1")
    m = as_mask(mask)
    return dilate(m, width) & ~erode(m, width)


def signed_distance(mask) -> np.ndarray:
    """Signed Euclidean distance to the nearest opposite-class pixel.

    Positive inside the foreground, negative in the background; distances
    are measured pixel-center to pixel-center, so |value| >= 1 everywhere.
    """
    m = as_mask(mask)
    fg = m.astype(bool)
    if fg.all() or not fg.any():
        raise DegenerateMaskError("mask needs at least one foreground and one background pixel")
    inside = ndimage.distance_transform_edt(fg)
    outside = ndimage.distance_transform_edt(~fg)
    return np.where(fg, inside, -outside)


def harmonic_deform(mask, rho: float, harmonics: int = 3, rng=None) -> np.ndarray:
    """Deform a mask boundary by thresholding its signed distance field
    against a superposition of random plane-wave sinusoids.

    The displacement field is (rho / H) * sum_h sin(w_h (x cos a_h + y sin a_h) + psi_h)
    with w_h ~ U[2pi/64, 2pi/16] rad/px, a_h ~ U[0, pi), psi_h ~ U[0, 2pi).
    Output pixel is foreground iff the signed distance exceeds the local
    displacement, so boundaries move by at most rho (plus one pixel of
    discretization). rho = 0 reproduces the input exactly.
    """
    if rho < 0:
        raise ValueError("rho must be >= 0")
    if harmonics < 1:
        raise ValueError("harmonics must be >= 1")
    m = as_mask(mask)
    phi = signed_distance(m)
    rng = np.random.default_rng(rng)
    h, w = m.shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    disp = np.zeros((h, w), dtype=np.float64)
    for _ in range(harmonics):
        omega = rng.uniform(HBD_OMEGA_LOW, HBD_OMEGA_HIGH)
        alpha = rng.uniform(0.0, np.pi)
        psi = rng.uniform(0.0, 2.0 * np.pi)
        disp += np.sin(omega * (xs * np.cos(alpha) + ys * np.sin(alpha)) + psi)
    disp *= rho / harmonics
    return (phi > disp).astype(np.uint8)
