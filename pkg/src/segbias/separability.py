"""Subgroup separability metrics on learned embeddings.

All metrics are pure functions of (vectors, groups). The probe is a
K-fold cross-validated logistic regression trained by plain gradient
descent; fisher_ratio carries a label-permutation p-value; mmd2 is the
biased multi-scale kernel statistic; pca_2d uses power iteration with
deflation and a deterministic sign convention.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import FoldDegenerateError, GroupTooSmallError
from .folds import stratified_fold_indices
from .penalties import median_pairwise_distance, mmd2_multiscale

__all__ = [
    "linear_probe",
    "silhouette",
    "fisher_ratio",
    "mmd2",
    "centroid_distance",
    "pca_2d",
    "PcaResult",
    "SeparabilityReport",
    "separability_report",
]

PROBE_ITERS = 500
PROBE_LR = 0.1
PROBE_L2 = 1e-4


def _check_embeddings(vectors, groups):
    X = np.asarray(vectors, dtype=np.float64)
    g = np.asarray(groups)
    if X.ndim != 2 or len(g) != X.shape[0]:
        raise ValueError("vectors must be (n, d) with one group per row")
    if not np.isfinite(X).all():
        raise ValueError("embeddings contain non-finite values")
    return X, g


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def linear_probe(vectors, groups, k: int = 5, seed: int = 0):
    """K-fold CV logistic regression predicting group from embedding.

    Returns (mean held-out accuracy, mean rank-based AUROC). The classifier
    is trained with full-batch gradient descent to effective convergence.
    """
    X, g = _check_embeddings(vectors, groups)
    ids = sorted(set(g.tolist()))
    if len(ids) != 2:
        raise FoldDegenerateError("probe needs exactly two groups")
    y = (g == ids[1]).astype(np.float64)
    if len(y) < 2 * k:
        raise FoldDegenerateError("need at least 2k points for a k-fold probe")
    folds = stratified_fold_indices(g, k, seed)
    accs, aucs = [], []
    for f in range(k):
        test = folds == f
        train = ~test
        if len(set(g[train].tolist())) < 2:
            raise FoldDegenerateError(f"fold {f}: training split is missing a group")
        w = np.zeros(X.shape[1])
        b = 0.0
        Xt, yt = X[train], y[train]
        n = len(yt)
        for _ in range(PROBE_ITERS):
            p = _sigmoid(Xt @ w + b)
            err = p - yt
            w -= PROBE_LR * (Xt.T @ err / n + 2.0 * PROBE_L2 * w)
            b -= PROBE_LR * float(err.mean())
        scores = X[test] @ w + b
        pred = scores > 0
        accs.append(float((pred == (y[test] > 0.5)).mean()))
        auc = _rank_auroc(scores, y[test])
        if auc is not None:
            aucs.append(auc)
    return float(np.mean(accs)), float(np.mean(aucs)) if aucs else float("nan")


def _rank_auroc(scores, labels):
    pos = labels > 0.5
    n1 = int(pos.sum())
    n0 = len(labels) - n1
    if n0 == 0 or n1 == 0:
        return None
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(len(scores), dtype=np.float64)
    ranks[order] = np.arange(1, len(scores) + 1)
    # average ranks over ties
    sorted_scores = scores[order]
    i = 0
    while i < len(sorted_scores):
        j = i
        while j + 1 < len(sorted_scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        if j > i:
            ranks[order[i : j + 1]] = (i + 1 + j + 1) / 2.0
        i = j + 1
    return float((ranks[pos].sum() - n1 * (n1 + 1) / 2.0) / (n0 * n1))


def silhouette(vectors, groups) -> float:
    """Mean silhouette over points: (b - a) / max(a, b) with Euclidean distance."""
    X, g = _check_embeddings(vectors, groups)
    ids = sorted(set(g.tolist()))
    if len(ids) != 2:
        raise GroupTooSmallError("silhouette needs exactly two groups")
    for gid in ids:
        if (g == gid).sum() < 2:
            raise GroupTooSmallError(f"group {gid} needs at least 2 members")
    diffs = X[:, None, :] - X[None, :, :]
    dist = np.sqrt((diffs * diffs).sum(axis=2))
    vals = []
    for i in range(len(g)):
        same = (g == g[i])
        same[i] = False
        a = dist[i, same].mean()
        b = dist[i, g != g[i]].mean()
        denom = max(a, b)
        vals.append(0.0 if denom == 0 else (b - a) / denom)
    return float(np.mean(vals))


def fisher_ratio(vectors, groups, n_permutations: int = 500, seed: int = 0):
    """trace(between-group scatter) / trace(within-group scatter) plus a
    label-permutation p-value (count of permuted ratios >= observed)."""
    X, g = _check_embeddings(vectors, groups)
    ids = sorted(set(g.tolist()))
    for gid in ids:
        if (g == gid).sum() < 2:
            raise GroupTooSmallError(f"group {gid} needs at least 2 members")

    def ratio(labels):
        mu = X.mean(axis=0)
        between = 0.0
        within = 0.0
        for gid in ids:
            sel = labels == gid
            mg = X[sel].mean(axis=0)
            between += sel.sum() * float(((mg - mu) ** 2).sum())
            within += float(((X[sel] - mg) ** 2).sum())
        if within == 0.0:
            return float("inf") if between > 0 else 0.0
        return between / within

    observed = ratio(g)
    rng = np.random.default_rng(seed)
    hits = 0
    for _ in range(n_permutations):
        if ratio(rng.permutation(g)) >= observed:
            hits += 1
    p = (1 + hits) / (1 + n_permutations)
    return observed, float(p)


def mmd2(X, Y, sigma0=None) -> float:
    """Biased multi-scale squared MMD between two sample sets."""
    value, _, _ = mmd2_multiscale(X, Y, sigma0=sigma0)
    return value


def centroid_distance(vectors, groups) -> float:
    """Euclidean distance between the two group mean vectors."""
    X, g = _check_embeddings(vectors, groups)
    ids = sorted(set(g.tolist()))
    if len(ids) != 2:
        raise GroupTooSmallError("centroid distance needs exactly two groups")
    mu0 = X[g == ids[0]].mean(axis=0)
    mu1 = X[g == ids[1]].mean(axis=0)
    return float(np.sqrt(((mu0 - mu1) ** 2).sum()))


@dataclass
class PcaResult:
    projection: np.ndarray  # (n, 2)
    components: np.ndarray  # (2, d)
    explained_variance: np.ndarray  # (2,)
    rank_deficient: bool


_POWER_ITERS = 10_000
_POWER_TOL = 1e-12


def _power_iteration(A, d, seed_vec):
    v = seed_vec / np.linalg.norm(seed_vec)
    lam = 0.0
    for _ in range(_POWER_ITERS):
        nv = A @ v
        norm = np.linalg.norm(nv)
        if norm == 0.0:
            return 0.0, v
        nv /= norm
        if np.linalg.norm(nv - v) < _POWER_TOL or np.linalg.norm(nv + v) < _POWER_TOL:
            v = nv
            lam = float(v @ A @ v)
            return lam, v
        v = nv
    return float(v @ A @ v), v


def _fix_sign(v):
    j = int(np.argmax(np.abs(v)))
    return v if v[j] > 0 else -v


def pca_2d(vectors) -> PcaResult:
    """Project onto the top two principal directions of the covariance.

    Eigenvectors come from power iteration with deflation, started from a
    fixed deterministic vector; each component's largest-magnitude
    coordinate is made positive. A rank-1 covariance yields a zero second
    column and sets the rank_deficient flag.
    """
    X = np.asarray(vectors, dtype=np.float64)
    n, d = X.shape
    if n < 3 or d < 2:
        raise ValueError("pca_2d needs n >= 3 points of dimension >= 2")
    centered = X - X.mean(axis=0)
    cov = centered.T @ centered / (n - 1)
    seed_vec = np.cos(np.arange(1, d + 1, dtype=np.float64))  # fixed, dense start
    lam1, v1 = _power_iteration(cov, d, seed_vec)
    v1 = _fix_sign(v1)
    deflated = cov - lam1 * np.outer(v1, v1)
    seed2 = seed_vec - (seed_vec @ v1) * v1
    if np.linalg.norm(seed2) < 1e-12:
        seed2 = np.sin(np.arange(1, d + 1, dtype=np.float64))
        seed2 -= (seed2 @ v1) * v1
    lam2, v2 = _power_iteration(deflated, d, seed2)
    v2 = _fix_sign(v2)
    rank_deficient = lam1 <= 0 or lam2 <= max(lam1, 1.0) * 1e-12 or lam2 <= 0
    if rank_deficient:
        v2 = np.zeros(d)
        lam2 = 0.0
    components = np.stack([v1, v2])
    projection = centered @ components.T
    if rank_deficient:
        projection[:, 1] = 0.0
    return PcaResult(
        projection=projection,
        components=components,
        explained_variance=np.array([max(lam1, 0.0), max(lam2, 0.0)]),
        rank_deficient=rank_deficient,
    )


@dataclass
class SeparabilityReport:
    probe_acc: float
    probe_auroc: float
    silhouette: float
    fisher: float
    fisher_p: float
    mmd2: float
    centroid_dist: float
    pca: PcaResult
    mmd_sigma0: float
    mmd_degenerate_bandwidth: bool

    def to_dict(self):
        return {
            "probe_acc": self.probe_acc,
            "probe_auroc": self.probe_auroc,
            "silhouette": self.silhouette,
            "fisher_ratio": self.fisher,
            "fisher_p": self.fisher_p,
            "mmd2": self.mmd2,
            "centroid_distance": self.centroid_dist,
            "pca_rank_deficient": self.pca.rank_deficient,
            "mmd_sigma0": self.mmd_sigma0,
            "mmd_degenerate_bandwidth": self.mmd_degenerate_bandwidth,
        }

    def write(self, out_dir, ids=None, groups=None):
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, "separability.json")
        with open(path, "w", encoding="ascii") as f:
            json.dump(self.to_dict(), f, indent=2)
            f.write("\n")
        if ids is not None and groups is not None:
            with open(os.path.join(out_dir, "pca_projection.csv"), "w", newline="", encoding="ascii") as f:
                writer = csv.writer(f)
                writer.writerow(["id", "group", "pc1", "pc2"])
                for sid, g, row in zip(ids, groups, self.pca.projection):
                    writer.writerow([sid, g, repr(float(row[0])), repr(float(row[1]))])
        return path


def separability_report(vectors, groups, *, folds=5, n_permutations=500, seed=0) -> SeparabilityReport:
    """Run the full metric suite on one embedding set."""
    X, g = _check_embeddings(vectors, groups)
    ids = sorted(set(g.tolist()))
    acc, auc = linear_probe(X, g, k=folds, seed=seed)
    sil = silhouette(X, g)
    fisher, fisher_p = fisher_ratio(X, g, n_permutations=n_permutations, seed=seed)
    value, sigma0, degenerate = mmd2_multiscale(X[g == ids[0]], X[g == ids[1]])
    return SeparabilityReport(
        probe_acc=acc,
        probe_auroc=auc,
        silhouette=sil,
        fisher=fisher,
        fisher_p=fisher_p,
        mmd2=value,
        centroid_dist=centroid_distance(X, g),
        pca=pca_2d(X),
        mmd_sigma0=sigma0,
        mmd_degenerate_bandwidth=degenerate,
    )
