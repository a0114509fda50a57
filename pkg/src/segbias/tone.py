"""Skin-tone group assignment from RGB images.

Pipeline: sRGB (D65) to CIE L*a*b*, dominant color of the non-lesion
pixels via seeded k-means with an elbow-selected cluster count, then the
individual typology angle arctan((L* - 50) / b*) binned into tone groups.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import TooFewPixelsError, UndefinedItaError

__all__ = [
    "LabColor",
    "ToneGroup",
    "rgb_to_lab",
    "rgb_image_to_lab",
    "dominant_color",
    "ita",
    "classify",
    "assign_tone",
]


@dataclass(frozen=True)
class LabColor:
    L: float
    a: float
    b: float


class ToneGroup(Enum):
    ST1_VERY_LIGHT = "ST1"
    ST2_LIGHT = "ST2"
    ST3_INTERMEDIATE = "ST3"
    ST4_TAN = "ST4"
    OUT_OF_RANGE = "OutOfRange"


# sRGB -> XYZ (D65) matrix and reference white
_SRGB_M = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_WHITE = np.array([0.95047, 1.0, 1.08883])
_DELTA = 6.0 / 29.0


def _srgb_linear(c):
    c = np.asarray(c, dtype=np.float64)
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def _lab_f(t):
    return np.where(t > _DELTA**3, np.cbrt(t), t / (3.0 * _DELTA**2) + 4.0 / 29.0)


def rgb_image_to_lab(rgb: np.ndarray) -> np.ndarray:
    """(..., 3) uint8 sRGB to (..., 3) float64 L*a*b*."""
    rgb = np.asarray(rgb, dtype=np.float64) / 255.0
    linear = _srgb_linear(rgb)
    xyz = linear @ _SRGB_M.T
    f = _lab_f(xyz / _WHITE)
    L = 116.0 * f[..., 1] - 16.0
    a = 500.0 * (f[..., 0] - f[..., 1])
    b = 200.0 * (f[..., 1] - f[..., 2])
    return np.stack([L, a, b], axis=-1)


def rgb_to_lab(r: int, g: int, b: int) -> LabColor:
    """Single 8-bit sRGB triple to L*a*b*."""
    lab = rgb_image_to_lab(np.array([[r, g, b]], dtype=np.float64))[0]
    return LabColor(L=float(lab[0]), a=float(lab[1]), b=float(lab[2]))


def dominant_color(pixels, k_range=range(2, 7), seed: int = 0) -> LabColor:
    """Centroid of the largest k-means cluster of Lab pixels.

    k is chosen by the largest second difference of the inertia curve over
    ``k_range`` (inertia is also computed one k beyond each end). Seeding
    is deterministic: pixels are sorted lexicographically, the first
    center is drawn from the seeded stream, and the rest follow
    farthest-point selection, so the result is permutation-invariant.
    """
    pts = np.atleast_2d(np.asarray(pixels, dtype=np.float64))
    ks = sorted(k_range)
    if len(pts) < ks[-1]:
        raise TooFewPixelsError(f"need at least {ks[-1]} pixels, got {len(pts)}")
    order = np.lexsort((pts[:, 2], pts[:, 1], pts[:, 0]))
    pts = pts[order]
    inertia = {}
    results = {}
    for k in range(max(1, ks[0] - 1), ks[-1] + 2):
        centers, labels, inert = _kmeans(pts, k, seed)
        inertia[k] = inert
        results[k] = (centers, labels)
    best_k, best_curv = ks[0], -np.inf
    for k in ks:
        curv = inertia[k - 1] - 2.0 * inertia[k] + inertia[k + 1]
        if curv > best_curv + 1e-12:
            best_k, best_curv = k, curv
    centers, labels = results[best_k]
    counts = np.bincount(labels, minlength=len(centers))
    c = centers[int(np.argmax(counts))]
    return LabColor(L=float(c[0]), a=float(c[1]), b=float(c[2]))


def _kmeans(pts, k, seed, max_iter=100):
    n = len(pts)
    if k >= n:
        return pts.copy(), np.arange(n), 0.0
    rng = np.random.default_rng((seed, k))
    centers = [pts[int(rng.integers(n))]]
    d2 = ((pts - centers[0]) ** 2).sum(axis=1)
    for _ in range(k - 1):
        centers.append(pts[int(np.argmax(d2))])
        d2 = np.minimum(d2, ((pts - centers[-1]) ** 2).sum(axis=1))
    centers = np.array(centers)
    labels = None
    for _it in range(max_iter):
        dists = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = dists.argmin(axis=1)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(k):
            sel = labels == j
            if sel.any():
                centers[j] = pts[sel].mean(axis=0)
    inert = float(((pts - centers[labels]) ** 2).sum())
    return centers, labels, inert


def ita(color: LabColor) -> float:
    """Individual typology angle in degrees: atan2(L* - 50, b*).

    For healthy-skin colors (b* > 0) this is arctan((L* - 50) / b*);
    non-positive b* lands outside every tone bin. Undefined only at the
    singular point L* = 50, b* = 0.
    """
    if color.b == 0.0 and color.L == 50.0:
        raise UndefinedItaError("ITA undefined at L*=50, b*=0")
    return math.degrees(math.atan2(color.L - 50.0, color.b))


# bin edges in degrees; angles above 90 can only come from b* <= 0
_BREAKS = (10.0, 28.0, 41.0, 55.0)


def classify(ita_degrees: float) -> ToneGroup:
    """Tone group from the typology angle; breakpoints at 10, 28, 41, 55."""
    v = ita_degrees
    if v > 90.0 or v <= _BREAKS[0]:
        return ToneGroup.OUT_OF_RANGE
    if v > _BREAKS[3]:
        return ToneGroup.ST1_VERY_LIGHT
    if v > _BREAKS[2]:
        return ToneGroup.ST2_LIGHT
    if v > _BREAKS[1]:
        return ToneGroup.ST3_INTERMEDIATE
    return ToneGroup.ST4_TAN


def assign_tone(rgb_image: np.ndarray, lesion_mask: np.ndarray, seed: int = 0):
    """Dominant non-lesion color, its ITA, and the tone group for one image.

    Returns (LabColor, ita_degrees, ToneGroup).
    """
    lab = rgb_image_to_lab(rgb_image)
    skin = lab[np.asarray(lesion_mask) == 0]
    color = dominant_color(skin, seed=seed)
    angle = ita(color)
    return color, angle, classify(angle)
