"""Dataset audit via confident labels over out-of-fold probabilities.

The pipeline: K-fold out-of-fold probability maps from unconditioned
models trained on observed labels only, per-class confidence thresholds,
confident label assignment with an argmax fallback, and joint
observed-vs-confident count matrices globally and per group.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .corpus import Corpus
from .errors import EmptyClassError, FoldDegenerateError
from .folds import stratified_fold_indices
from .learner import TrainConfig, predict, train
from .utils import thread_map

__all__ = [
    "FoldPlan",
    "Thresholds",
    "JointDistribution",
    "ErrorRates",
    "make_fold_plan",
    "crossval_probs",
    "class_thresholds",
    "confident_labels",
    "joint_distributions",
    "error_rates",
    "run_audit",
    "AuditResult",
]


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignment: dict  # sample id -> fold index
    seed: int

    def fold_of(self, sample_id) -> int:
        return self.assignment[sample_id]


@dataclass(frozen=True)
class Thresholds:
    t_bg: float
    t_fg: float


@dataclass
class JointDistribution:
    counts: np.ndarray  # (2, 2) int64 indexed [observed][confident]
    scope: object  # "global" or a group id

    @property
    def n_pixels(self) -> int:
        return int(self.counts.sum())

    @property
    def q(self) -> np.ndarray:
        return self.counts.astype(np.float64) / self.n_pixels


@dataclass(frozen=True)
class ErrorRates:
    omission: float  # observed background, confidently foreground
    commission: float  # observed foreground, confidently background

    @property
    def total(self) -> float:
        return self.omission + self.commission


def make_fold_plan(corpus: Corpus, k: int, seed: int = 0) -> FoldPlan:
    groups = [s.group for s in corpus]
    assignment = stratified_fold_indices(groups, k, seed)
    return FoldPlan(k=k, assignment={s.id: int(f) for s, f in zip(corpus, assignment)}, seed=seed)


def crossval_probs(corpus: Corpus, k: int, train_config: TrainConfig, seed: int = 0):
    """Out-of-fold probability maps from unconditioned audit models.

    Each fold's samples are predicted by a model trained only on the other
    folds, using observed labels, no mitigation, and frozen identity
    modulation, so predictions estimate what a generic model would produce.
    Returns (probmaps dict, FoldPlan).
    """
    if k < 2:
        raise FoldDegenerateError("audit needs k >= 2 folds")
    plan = make_fold_plan(corpus, k, seed)
    audit_config = replace(train_config, mitigation="none", penalty="none", biased_group=None)
    by_fold = {f: [s for s in corpus if plan.fold_of(s.id) == f] for f in range(k)}
    for f in range(k):
        train_split = [s for s in corpus if plan.fold_of(s.id) != f]
        groups = {s.group for s in train_split}
        if len(groups) < 2:
            raise FoldDegenerateError(f"fold {f}: training split is missing a group")
        has_fg = any(s.mask_obs.any() for s in train_split)
        has_bg = any(not s.mask_obs.all() for s in train_split)
        if not (has_fg and has_bg):
            raise FoldDegenerateError(f"fold {f}: training split is missing a pixel class")

    def run_fold(f):
        train_split = [s for s in corpus if plan.fold_of(s.id) != f]
        sub = Corpus(samples=train_split, clean_group=corpus.clean_group)
        fold_seed = int(np.random.SeedSequence((train_config.seed, f)).generate_state(1)[0] % 2**31)
        model, _ = train(sub, replace(audit_config, seed=fold_seed))
        out = {}
        for s in by_fold[f]:
            out[s.id] = predict(model, s.image, force_group=s.group)
        return out

    probmaps = {}
    for fold_result in thread_map(run_fold, list(range(k))):
        probmaps.update(fold_result)
    return probmaps, plan


def class_thresholds(probmaps: dict, corpus: Corpus) -> Thresholds:
    """Per-class mean predicted probability over pixels observed as that class.

    Aggregation is global over all held-out pixels across folds.
    """
    fg_sum = bg_sum = 0.0
    fg_n = bg_n = 0
    for s in corpus:
        p = probmaps[s.id].ravel()
        obs = s.mask_obs.ravel().astype(bool)
        fg_sum += p[obs].sum()
        fg_n += int(obs.sum())
        bg_sum += (1.0 - p[~obs]).sum()
        bg_n += int((~obs).sum())
    if fg_n == 0:
        raise EmptyClassError("no observed foreground pixels")
    if bg_n == 0:
        raise EmptyClassError("no observed background pixels")
    return Thresholds(t_bg=bg_sum / bg_n, t_fg=fg_sum / fg_n)


def confident_labels(probmap: np.ndarray, thresholds: Thresholds) -> np.ndarray:
    """Threshold-normalized argmax with plain-argmax fallback; ties go to background.

    A pixel is confidently labeled by the class whose probability exceeds
    its class threshold (largest normalized ratio wins); pixels confident
    for neither class fall back to the unnormalized argmax.
    """
    p = np.asarray(probmap, dtype=np.float64)
    r_fg = p / thresholds.t_fg
    r_bg = (1.0 - p) / thresholds.t_bg
    confident = np.maximum(r_fg, r_bg) >= 1.0
    pick_norm = r_fg > r_bg
    pick_fallback = p > 0.5
    return np.where(confident, pick_norm, pick_fallback).astype(np.uint8)


def joint_distributions(corpus: Corpus, confident: dict) -> dict:
    """Joint observed-vs-confident counts, globally and per group.

    Returns {"global": JointDistribution, group_id: JointDistribution, ...};
    per-group counts sum exactly to the global counts.
    """
    per_group = {g: np.zeros((2, 2), dtype=np.int64) for g in corpus.groups()}
    for s in corpus:
        obs = s.mask_obs.ravel().astype(np.int64)
        hat = confident[s.id].ravel().astype(np.int64)
        idx = obs * 2 + hat
        binc = np.bincount(idx, minlength=4).reshape(2, 2)
        per_group[s.group] += binc
    out = {g: JointDistribution(counts=c, scope=g) for g, c in per_group.items()}
    out["global"] = JointDistribution(
        counts=sum(per_group.values(), np.zeros((2, 2), dtype=np.int64)), scope="global"
    )
    return out


def error_rates(jd: JointDistribution) -> ErrorRates:
    q = jd.q
    return ErrorRates(omission=float(q[0, 1]), commission=float(q[1, 0]))


@dataclass
class AuditResult:
    thresholds: Thresholds
    plan: FoldPlan
    joints: dict  # scope -> JointDistribution
    rates: dict  # scope -> ErrorRates
    confident: dict  # sample id -> uint8 map
    indicators: object = None  # BiasIndicators, attached by the caller

    def to_dict(self):
        def jd_dict(jd):
            return {
                "counts": jd.counts.tolist(),
                "q": [[float(x) for x in row] for row in jd.q],
                "n_pixels": jd.n_pixels,
            }

        scopes = {}
        for scope, jd in self.joints.items():
            r = self.rates[scope]
            scopes[str(scope)] = {
                **jd_dict(jd),
                "omission_rate": r.omission,
                "commission_rate": r.commission,
                "error_rate": r.total,
            }
        out = {
            "thresholds": {"t_bg": self.thresholds.t_bg, "t_fg": self.thresholds.t_fg},
            "folds": self.plan.k,
            "fold_seed": self.plan.seed,
            "scopes": scopes,
        }
        if self.indicators is not None:
            out["bias_indicators"] = self.indicators.to_dict()
        return out

    def write(self, out_dir, save_maps=False, corpus=None):
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, "audit.json")
        with open(path, "w", encoding="ascii") as f:
            json.dump(self.to_dict(), f, indent=2)
            f.write("\n")
        csv_path = os.path.join(out_dir, "audit.csv")
        with open(csv_path, "w", newline="", encoding="ascii") as f:
            writer = csv.writer(f)
            writer.writerow(["scope", "n_pixels", "omission_rate", "commission_rate", "error_rate"])
            for scope in sorted(self.joints, key=str):
                jd, r = self.joints[scope], self.rates[scope]
                writer.writerow([scope, jd.n_pixels, repr(r.omission), repr(r.commission), repr(r.total)])
        if save_maps and corpus is not None:
            from .pgm import mask_to_pgm_values, write_pgm

            maps_dir = os.path.join(out_dir, "audit_maps")
            os.makedirs(maps_dir, exist_ok=True)
            for s in corpus:
                hat = self.confident[s.id]
                write_pgm(os.path.join(maps_dir, f"{s.id}_confident.pgm"), mask_to_pgm_values(hat))
                disagree = (hat != s.mask_obs).astype(np.uint8)
                write_pgm(os.path.join(maps_dir, f"{s.id}_disagree.pgm"), mask_to_pgm_values(disagree))
        return path


def run_audit(corpus: Corpus, k: int, train_config: TrainConfig, seed: int = 0) -> AuditResult:
    """Full audit: out-of-fold probabilities, thresholds, confident labels,
    joint distributions, and per-scope error rates."""
    probmaps, plan = crossval_probs(corpus, k, train_config, seed=seed)
    thresholds = class_thresholds(probmaps, corpus)
    confident = {sid: confident_labels(pm, thresholds) for sid, pm in probmaps.items()}
    joints = joint_distributions(corpus, confident)
    rates = {scope: error_rates(jd) for scope, jd in joints.items()}
    return AuditResult(thresholds=thresholds, plan=plan, joints=joints, rates=rates, confident=confident)
