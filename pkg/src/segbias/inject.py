"""Sample-level, group-conditional label corruption.

Exactly round(beta * |target group|) samples are selected without
replacement under a seeded shuffle, and their observed masks are replaced
by a morphological corruption; the previous observed mask is retained as
the clean mask. Everything else is left bit-identical.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .corpus import Corpus, round_half_up
from .errors import AlreadyBiasedError, ConfigError, DegenerateMaskError
from .morphology import dilate, erode, harmonic_deform

__all__ = ["BiasSpec", "InjectionRecord", "inject"]

OPERATORS = ("erosion", "dilation", "hbd")


@dataclass(frozen=True)
class BiasSpec:
    target_group: int = 1
    beta: float = 0.5
    operator: str = "erosion"
    radius: int = 2
    seed: int = 0

    def validate(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ConfigError("beta must be in [0, 1]")
        if self.operator not in OPERATORS:
            raise ConfigError(f"operator must be one of {OPERATORS}, got {self.operator!r}")
        if self.radius < 0:
            raise ConfigError("radius must be >= 0")
        if self.target_group not in (0, 1):
            raise ConfigError("target_group must be 0 or 1")


@dataclass
class InjectionRecord:
    target_group: int
    beta: float
    operator: str
    radius: int
    seed: int
    selected: list = field(default_factory=list)
    skipped: list = field(default_factory=list)  # degenerate masks the operator could not touch

    def to_dict(self):
        return {
            "target_group": self.target_group,
            "beta": self.beta,
            "operator": self.operator,
            "radius": self.radius,
            "seed": self.seed,
            "selected": list(self.selected),
            "skipped": list(self.skipped),
        }

    def write(self, path):
        with open(path, "w", encoding="ascii") as f:
            json.dump(self.to_dict(), f, indent=2)
            f.write("\n")


def inject(corpus: Corpus, spec: BiasSpec):
    """Apply the corruption described by ``spec``; returns (new corpus, record).

    Raises AlreadyBiasedError when the target group already contains
    corrupted samples, so provenance stays single-shot. Degenerate masks
    (relevant to the deformation operator) are skipped with a warning and
    recorded, never silently dropped.
    """
    spec.validate()
    target_ids = [s.id for s in corpus if s.group == spec.target_group]
    if not target_ids:
        raise ConfigError(f"target group {spec.target_group} not present in corpus")
    already = [s.id for s in corpus if s.group == spec.target_group and s.corrupted]
    if already and spec.beta > 0:
        raise AlreadyBiasedError(
            f"group {spec.target_group} already has {len(already)} corrupted samples"
        )

    n_sel = round_half_up(spec.beta * len(target_ids))
    rng = np.random.default_rng(spec.seed)
    order = rng.permutation(len(target_ids))
    chosen = {target_ids[i] for i in order[:n_sel]}

    record = InjectionRecord(
        target_group=spec.target_group,
        beta=spec.beta,
        operator=spec.operator,
        radius=spec.radius,
        seed=spec.seed,
    )
    new_samples = []
    for idx, s in enumerate(corpus):
        if s.id not in chosen:
            new_samples.append(s)
            continue
        try:
            corrupted_mask = _apply_operator(s.mask_obs, spec, idx)
        except DegenerateMaskError:
            warnings.warn(f"sample {s.id}: degenerate mask, skipping corruption")
            record.skipped.append(s.id)
            new_samples.append(s)
            continue
        new_samples.append(
            s.replace(mask_clean=s.mask_obs.copy(), mask_obs=corrupted_mask, corrupted=True)
        )
        record.selected.append(s.id)
    return Corpus(samples=new_samples, clean_group=corpus.clean_group), record


def _apply_operator(mask, spec: BiasSpec, sample_index: int):
    if spec.operator == "erosion":
        return erode(mask, spec.radius)
    if spec.operator == "dilation":
        return dilate(mask, spec.radius)
    # deformation amplitude is tied to the shared radius parameter
    return harmonic_deform(mask, rho=spec.radius, rng=np.random.default_rng((spec.seed, sample_index)))
