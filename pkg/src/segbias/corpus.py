"""Synthetic segmentation corpora: samples, reproducible generation, and
the on-disk manifest format.

A corpus is a list of samples, each holding a grayscale image in [0, 1],
an observed mask, an optional retained clean mask, a group id in {0, 1},
and a corruption flag. One group is designated as the nominally clean
reference group.
"""

from __future__ import annotations

import contextlib
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionMismatchError, ManifestError
from .morphology import harmonic_deform
from .pgm import mask_to_pgm_values, pgm_values_to_mask, read_pgm, write_pgm

__all__ = [
    "Sample",
    "Corpus",
    "GenConfig",
    "generate",
    "write_manifest",
    "read_manifest",
    "clean_access_guard",
]

# Test hook: callables invoked with the sample id whenever a clean mask is
# read. Lets the test suite prove that audit/training never touch clean masks.
_clean_access_hooks: list = []


@contextlib.contextmanager
def clean_access_guard(callback):
    """Register ``callback(sample_id)`` for every clean-mask read in scope."""
    _clean_access_hooks.append(callback)
    try:
        yield
    finally:
        _clean_access_hooks.remove(callback)


class Sample:
    """One image with its observed mask and provenance."""

    __slots__ = ("id", "group", "image", "mask_obs", "_mask_clean", "corrupted")

    def __init__(self, id, group, image, mask_obs, mask_clean=None, corrupted=False):
        self.id = str(id)
        self.group = int(group)
        self.image = np.asarray(image, dtype=np.float64)
        self.mask_obs = np.asarray(mask_obs, dtype=np.uint8)
        self._mask_clean = None if mask_clean is None else np.asarray(mask_clean, dtype=np.uint8)
        self.corrupted = bool(corrupted)
        if self.image.shape != self.mask_obs.shape:
            raise DimensionMismatchError(f"sample {self.id}: image/mask shapes differ")
        if self._mask_clean is not None and self._mask_clean.shape != self.image.shape:
            raise DimensionMismatchError(f"sample {self.id}: clean mask shape differs")
        if self.corrupted and self._mask_clean is None:
            raise ConfigError(f"sample {self.id}: corrupted sample must retain a clean mask")

    @property
    def mask_clean(self):
        for hook in _clean_access_hooks:
            hook(self.id)
        return self._mask_clean

    @property
    def has_clean(self) -> bool:
        """Presence check that does not count as a clean-mask read."""
        return self._mask_clean is not None

    def replace(self, **kw) -> "Sample":
        vals = dict(
            id=self.id,
            group=self.group,
            image=self.image,
            mask_obs=self.mask_obs,
            mask_clean=self._mask_clean,
            corrupted=self.corrupted,
        )
        vals.update(kw)
        return Sample(**vals)

    def __eq__(self, other):
        if not isinstance(other, Sample):
            return NotImplemented
        same_clean = (self._mask_clean is None) == (other._mask_clean is None) and (
            self._mask_clean is None or np.array_equal(self._mask_clean, other._mask_clean)
        )
        return (
            self.id == other.id
            and self.group == other.group
            and self.corrupted == other.corrupted
            and np.array_equal(self.image, other.image)
            and np.array_equal(self.mask_obs, other.mask_obs)
            and same_clean
        )


@dataclass
class Corpus:
    samples: list = field(default_factory=list)
    clean_group: int = 0

    def __post_init__(self):
        ids = [s.id for s in self.samples]
        if len(set(ids)) != len(ids):
            raise ConfigError("sample ids must be unique")
        groups = {s.group for s in self.samples}
        if self.samples and groups != {0, 1}:
            raise ConfigError(f"corpus must contain both groups 0 and 1, got {sorted(groups)}")

    @property
    def biased_group(self) -> int:
        return 1 - self.clean_group

    @property
    def width(self) -> int:
        return self.samples[0].image.shape[1]

    @property
    def height(self) -> int:
        return self.samples[0].image.shape[0]

    def groups(self):
        return sorted({s.group for s in self.samples})

    def by_group(self, group: int):
        return [s for s in self.samples if s.group == group]

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __eq__(self, other):
        if not isinstance(other, Corpus):
            return NotImplemented
        return self.clean_group == other.clean_group and self.samples == other.samples


@dataclass(frozen=True)
class GenConfig:
    n_samples: int = 200
    width: int = 64
    height: int = 64
    shape: str = "ellipse"  # "ellipse" or "blob"
    contrast: float = 0.5
    noise_sigma: float = 0.1
    cue_shift: float = 0.05  # intensity offset added to biased-group images
    group_balance: float = 0.5  # fraction of samples in the biased group
    clean_group: int = 0
    seed: int = 0

    def validate(self):
        if self.n_samples < 2:
            raise ConfigError("n_samples must be >= 2")
        if self.width < 8 or self.height < 8:
            raise ConfigError("canvas must be at least 8x8")
        if self.shape not in ("ellipse", "blob"):
            raise ConfigError(f"unknown shape family {self.shape!r}")
        if not 0.0 <= self.contrast <= 1.0:
            raise ConfigError("contrast must be in [0, 1]")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")
        if not 0.0 <= self.cue_shift <= 1.0:
            raise ConfigError("cue_shift must be in [0, 1]")
        if not 0.0 < self.group_balance < 1.0:
            raise ConfigError("group_balance must be in (0, 1)")
        if self.clean_group not in (0, 1):
            raise ConfigError("clean_group must be 0 or 1")


def round_half_up(x: float) -> int:
    """round() with deterministic half-up ties (no banker's rounding)."""
    return int(math.floor(x + 0.5))


# retained fraction of the canvas that the foreground object must occupy
_COVER_LO = 0.05
_COVER_HI = 0.60

# shared annotation realism: the drawn (visible) object edge wanders a
# little around the annotated mask boundary, identically for both groups,
# so even a perfect model keeps a symmetric floor of boundary disagreement
EDGE_WOBBLE_RHO = 3.5
# per-image illumination jitter as a fraction of the pixel noise level;
# discourages placing boundaries off absolute brightness alone
ILLUM_JITTER_FRAC = 1.0 / 3.0


def generate(config: GenConfig) -> Corpus:
    """Generate a reproducible corpus of single-object grayscale images.

    Objects are dark on a bright background; the biased group's images get
    the configured additive intensity cue. Clean and observed masks start
    identical. Identical configs produce bit-identical corpora because
    every draw comes from one seeded stream in fixed order.
    """
    config.validate()
    rng = np.random.default_rng(config.seed)
    biased = 1 - config.clean_group
    n_b = round_half_up(config.group_balance * config.n_samples)
    if n_b == 0 or n_b == config.n_samples:
        raise ConfigError("group_balance leaves one group empty")
    groups = np.array([biased] * n_b + [config.clean_group] * (config.n_samples - n_b))
    rng.shuffle(groups)

    lo = 0.5 - 0.45 * config.contrast
    hi = 0.5 + 0.45 * config.contrast
    samples = []
    for i in range(config.n_samples):
        mask = _draw_shape(config, rng)
        visible = harmonic_deform(mask, EDGE_WOBBLE_RHO, rng=rng)
        img = hi - (hi - lo) * visible.astype(np.float64)
        if groups[i] == biased:
            img = img + config.cue_shift
        if config.noise_sigma > 0:
            img = img + rng.uniform(
                -config.noise_sigma * ILLUM_JITTER_FRAC, config.noise_sigma * ILLUM_JITTER_FRAC
            )
            img = img + rng.normal(0.0, config.noise_sigma, size=mask.shape)
        img = np.clip(img, 0.0, 1.0)
        img = np.round(img * 255.0) / 255.0  # land on the 8-bit grid so files round-trip
        samples.append(
            Sample(
                id=f"s{i:04d}",
                group=int(groups[i]),
                image=img,
                mask_obs=mask,
                mask_clean=mask.copy(),
                corrupted=False,
            )
        )
    return Corpus(samples=samples, clean_group=config.clean_group)


def _draw_shape(config: GenConfig, rng) -> np.ndarray:
    h, w = config.height, config.width
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    scale = min(w, h)
    for _ in range(200):
        cy = rng.uniform(0.35, 0.65) * h
        cx = rng.uniform(0.35, 0.65) * w
        a = rng.uniform(0.16, 0.34) * scale
        b = rng.uniform(0.16, 0.34) * scale
        theta = rng.uniform(0.0, np.pi)
        dx = xs - cx
        dy = ys - cy
        u = dx * np.cos(theta) + dy * np.sin(theta)
        v = -dx * np.sin(theta) + dy * np.cos(theta)
        if config.shape == "ellipse":
            mask = (u / a) ** 2 + (v / b) ** 2 <= 1.0
        else:
            # star-convex blob: ellipse radius modulated by low-frequency harmonics
            ang = np.arctan2(v, u)
            wobble = np.zeros_like(ang)
            for k in (2, 3, 4):
                amp = rng.uniform(0.0, 0.25 / k)
                phase = rng.uniform(0.0, 2.0 * np.pi)
                wobble += amp * np.cos(k * ang + phase)
            mask = (u / a) ** 2 + (v / b) ** 2 <= (1.0 + wobble) ** 2
        cover = mask.mean()
        if _COVER_LO <= cover <= _COVER_HI:
            return mask.astype(np.uint8)
    raise ConfigError("could not draw a foreground object within coverage bounds")


def write_manifest(corpus: Corpus, out_dir) -> str:
    """Write per-sample PGM files plus ``manifest.json``; returns the manifest path."""
    os.makedirs(out_dir, exist_ok=True)
    entries = []
    for s in corpus:
        img_name = f"{s.id}_image.pgm"
        obs_name = f"{s.id}_mask_obs.pgm"
        write_pgm(os.path.join(out_dir, img_name), np.round(s.image * 255.0).astype(np.uint8))
        write_pgm(os.path.join(out_dir, obs_name), mask_to_pgm_values(s.mask_obs))
        entry = {"id": s.id, "group": s.group, "image": img_name, "mask_obs": obs_name}
        if s.has_clean:
            clean_name = f"{s.id}_mask_clean.pgm"
            write_pgm(os.path.join(out_dir, clean_name), mask_to_pgm_values(s._mask_clean))
            entry["mask_clean"] = clean_name
        entry["corrupted"] = s.corrupted
        entries.append(entry)
    manifest = {
        "width": corpus.width,
        "height": corpus.height,
        "clean_group": corpus.clean_group,
        "samples": entries,
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w", encoding="ascii") as f:
        json.dump(manifest, f, indent=2)
        f.write("\n")
    return path


def read_manifest(path) -> Corpus:
    """Inverse of :func:`write_manifest`."""
    try:
        with open(path, "r", encoding="ascii") as f:
            manifest = json.load(f)
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ManifestError(f"malformed manifest {path}: {exc}") from exc
    base = os.path.dirname(os.path.abspath(path))
    try:
        width = int(manifest["width"])
        height = int(manifest["height"])
        clean_group = int(manifest["clean_group"])
        raw_samples = manifest["samples"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ManifestError(f"manifest {path} is missing required keys: {exc}") from exc
    samples = []
    for entry in raw_samples:
        sid = entry.get("id", "<missing id>")
        try:
            image = read_pgm(os.path.join(base, entry["image"])).astype(np.float64) / 255.0
            mask_obs = pgm_values_to_mask(read_pgm(os.path.join(base, entry["mask_obs"])))
            mask_clean = None
            if "mask_clean" in entry:
                mask_clean = pgm_values_to_mask(read_pgm(os.path.join(base, entry["mask_clean"])))
            if image.shape != (height, width):
                raise DimensionMismatchError(
                    f"sample {sid}: image is {image.shape}, manifest says {(height, width)}"
                )
            sample = Sample(
                id=entry["id"],
                group=entry["group"],
                image=image,
                mask_obs=mask_obs,
                mask_clean=mask_clean,
                corrupted=entry.get("corrupted", False),
            )
        except DimensionMismatchError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ManifestError(f"manifest entry {sid}: {exc}") from exc
        samples.append(sample)
    return Corpus(samples=samples, clean_group=clean_group)
