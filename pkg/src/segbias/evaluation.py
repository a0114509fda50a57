"""Segmentation quality and fairness-gap reporting.

Dice and IoU in percent, per-group mean and std, and the subgroup gap
(clean-group mean minus biased-group mean) against either the observed or
the retained clean masks. Multi-seed runs aggregate per-seed reports.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass

import numpy as np

from .corpus import Corpus
from .errors import MissingCleanMaskError, ShapeMismatchError
from .learner import predict_mask

__all__ = ["dice", "iou", "evaluate", "aggregate_reports", "EvalReport", "GroupStats"]


def _pair(a, b):
    a = np.asarray(a).astype(bool)
    b = np.asarray(b).astype(bool)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"mask shapes differ: {a.shape} vs {b.shape}")
    return a, b


def dice(a, b) -> float:
    """2|a n b| / (|a| + |b|); two empty masks agree perfectly (1.0)."""
    a, b = _pair(a, b)
    denom = int(a.sum()) + int(b.sum())
    if denom == 0:
        return 1.0
    return 2.0 * int((a & b).sum()) / denom


def iou(a, b) -> float:
    """|a n b| / |a u b|; two empty masks agree perfectly (1.0)."""
    a, b = _pair(a, b)
    union = int((a | b).sum())
    if union == 0:
        return 1.0
    return int((a & b).sum()) / union


@dataclass
class GroupStats:
    dice_mean: float
    dice_std: float
    iou_mean: float
    iou_std: float
    n: int


@dataclass
class EvalReport:
    reference: str  # "observed" or "clean"
    per_group: dict  # group id -> GroupStats (values in percent)
    clean_group: int
    n_seeds: int = 1

    @property
    def dice_gap(self) -> float:
        b = 1 - self.clean_group
        return self.per_group[self.clean_group].dice_mean - self.per_group[b].dice_mean

    @property
    def iou_gap(self) -> float:
        b = 1 - self.clean_group
        return self.per_group[self.clean_group].iou_mean - self.per_group[b].iou_mean

    def to_dict(self):
        return {
            "reference": self.reference,
            "clean_group": self.clean_group,
            "n_seeds": self.n_seeds,
            "groups": {
                str(g): {
                    "dice_mean": s.dice_mean,
                    "dice_std": s.dice_std,
                    "iou_mean": s.iou_mean,
                    "iou_std": s.iou_std,
                    "n": s.n,
                }
                for g, s in sorted(self.per_group.items())
            },
            "dice_gap": self.dice_gap,
            "iou_gap": self.iou_gap,
        }

    def write(self, out_dir, stem="eval"):
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, f"{stem}.json")
        with open(path, "w", encoding="ascii") as f:
            json.dump(self.to_dict(), f, indent=2)
            f.write("\n")
        with open(os.path.join(out_dir, f"{stem}.csv"), "w", newline="", encoding="ascii") as f:
            writer = csv.writer(f)
            writer.writerow(["reference", "group", "metric", "mean", "std", "n_seeds"])
            for g, s in sorted(self.per_group.items()):
                writer.writerow([self.reference, g, "dice", repr(s.dice_mean), repr(s.dice_std), self.n_seeds])
                writer.writerow([self.reference, g, "iou", repr(s.iou_mean), repr(s.iou_std), self.n_seeds])
        return path


def _reference_mask(sample, reference):
    if reference == "observed":
        return sample.mask_obs
    if sample.corrupted:
        clean = sample.mask_clean
        if clean is None:
            raise MissingCleanMaskError(f"sample {sample.id} is corrupted but has no clean mask")
        return clean
    return sample.mask_clean if sample.has_clean else sample.mask_obs


def evaluate(corpus: Corpus, model=None, predicted=None, reference="observed", force_group=None) -> EvalReport:
    """Score predictions per group against observed or clean masks.

    ``predicted`` maps sample id to a binary mask; when absent, masks come
    from thresholding the model's probability map at 0.5 with conditioning
    forced to ``force_group`` (default: the corpus clean group).
    """
    if reference not in ("observed", "clean"):
        raise ValueError("reference must be 'observed' or 'clean'")
    if predicted is None and model is None:
        raise ValueError("need a model or a prediction mapping")
    fg = corpus.clean_group if force_group is None else force_group
    per_group_scores = {g: {"dice": [], "iou": []} for g in corpus.groups()}
    for s in corpus:
        pred = predicted[s.id] if predicted is not None else predict_mask(model, s.image, force_group=fg)
        ref = _reference_mask(s, reference)
        per_group_scores[s.group]["dice"].append(100.0 * dice(pred, ref))
        per_group_scores[s.group]["iou"].append(100.0 * iou(pred, ref))
    per_group = {}
    for g, scores in per_group_scores.items():
        d = np.asarray(scores["dice"])
        i = np.asarray(scores["iou"])
        per_group[g] = GroupStats(
            dice_mean=float(d.mean()),
            dice_std=float(d.std()),
            iou_mean=float(i.mean()),
            iou_std=float(i.std()),
            n=len(d),
        )
    return EvalReport(reference=reference, per_group=per_group, clean_group=corpus.clean_group)


def aggregate_reports(reports) -> EvalReport:
    """Aggregate per-seed reports: mean of per-seed means, std across seeds."""
    if not reports:
        raise ValueError("no reports to aggregate")
    ref = reports[0].reference
    clean_group = reports[0].clean_group
    if any(r.reference != ref or r.clean_group != clean_group for r in reports):
        raise ValueError("reports disagree on reference or clean group")
    per_group = {}
    for g in reports[0].per_group:
        d = np.array([r.per_group[g].dice_mean for r in reports])
        i = np.array([r.per_group[g].iou_mean for r in reports])
        per_group[g] = GroupStats(
            dice_mean=float(d.mean()),
            dice_std=float(d.std()),
            iou_mean=float(i.mean()),
            iou_std=float(i.std()),
            n=reports[0].per_group[g].n,
        )
    return EvalReport(reference=ref, per_group=per_group, clean_group=clean_group, n_seeds=len(reports))
