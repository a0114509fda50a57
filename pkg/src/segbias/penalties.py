"""Batch-level fairness penalties and their exact gradients.

All penalties compare the two groups present in a batch; when a batch
contains only one group the penalty is zero and flagged. Kernel
bandwidths and pixel subsamples are frozen into a context object per
training step, so each penalty is an exactly differentiable function of
the batch outputs given that context.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "BatchForward",
    "PenaltyContext",
    "PenaltyResult",
    "make_context",
    "penalty_with_grads",
    "penalty_value",
    "mmd2_multiscale",
]

MMD_SCALES = (-2, -1, 0, 1, 2)
MMD_MAX_PIXELS = 256


@dataclass
class BatchForward:
    """Per-image forward results a penalty can consume."""

    groups: list
    probs: list  # flat float arrays, one per image
    targets: list  # flat 0/1 arrays, one per image
    logits: list | None  # flat float arrays, one per image (logit penalties only)
    gap: np.ndarray  # (n_images, hidden_dim) mean hidden activations


@dataclass
class PenaltyContext:
    """Step-frozen randomness: bandwidths and pixel subsamples."""

    sigma0: float | None = None  # feature-level bandwidth
    sigma0_by_class: dict = field(default_factory=dict)
    subsample: dict = field(default_factory=dict)  # (cls, grp) -> (img_idx, pix_idx) arrays
    degenerate_bandwidth: bool = False


@dataclass
class PenaltyResult:
    value: float
    gz: list | None = None  # per-image d(penalty)/d(logit), same shapes as probs
    ghid: np.ndarray | None = None  # (n_images, hidden_dim) d(penalty)/d(gap row)
    single_group: bool = False


def _group_pair(groups):
    ids = sorted(set(groups))
    if len(ids) < 2:
        return None
    return ids[0], ids[1]


def median_pairwise_distance(points: np.ndarray) -> float:
    """Median Euclidean distance over all distinct pairs."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if pts.shape[0] < 2:
        return 0.0
    d2 = _sq_dists(pts, pts)
    iu = np.triu_indices(pts.shape[0], k=1)
    return float(np.median(np.sqrt(d2[iu])))


def _sq_dists(a, b):
    aa = (a * a).sum(axis=1)[:, None]
    bb = (b * b).sum(axis=1)[None, :]
    d2 = aa + bb - 2.0 * (a @ b.T)
    np.maximum(d2, 0.0, out=d2)
    return d2


def mmd2_multiscale(X, Y, sigma0=None):
    """Biased (V-statistic) squared MMD summed over the five dyadic scales.

    sigma0 defaults to the median pairwise distance over the pooled
    samples; a zero median falls back to 1 and is flagged.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    if X.shape[0] < 2 or Y.shape[0] < 2:
        raise ValueError("mmd2 needs at least two samples per side")
    degenerate = False
    if sigma0 is None:
        sigma0 = median_pairwise_distance(np.vstack([X, Y]))
        if sigma0 == 0.0:
            sigma0 = 1.0
            degenerate = True
    value, _, _ = _mmd2_grads(X, Y, sigma0, want_grads=False)
    return value, sigma0, degenerate


def _mmd2_grads(X, Y, sigma0, want_grads=True):
    n, m = X.shape[0], Y.shape[0]
    d2xx = _sq_dists(X, X)
    d2yy = _sq_dists(Y, Y)
    d2xy = _sq_dists(X, Y)
    value = 0.0
    gX = np.zeros_like(X) if want_grads else None
    gY = np.zeros_like(Y) if want_grads else None
    for s in MMD_SCALES:
        sig2 = (sigma0 * 2.0**s) ** 2
        kxx = np.exp(-d2xx / (2.0 * sig2))
        kyy = np.exp(-d2yy / (2.0 * sig2))
        kxy = np.exp(-d2xy / (2.0 * sig2))
        value += kxx.mean() + kyy.mean() - 2.0 * kxy.mean()
        if not want_grads:
            continue
        # d/dx_i of exp(-|x_i-x_j|^2 / 2 sig^2) = -(x_i-x_j)/sig^2 * k_ij
        wxx = kxx / sig2
        wxy = kxy / sig2
        wyy = kyy / sig2
        gX += (-2.0 / n**2) * (wxx.sum(axis=1)[:, None] * X - wxx @ X)
        gX += (2.0 / (n * m)) * (wxy.sum(axis=1)[:, None] * X - wxy @ Y)
        gY += (-2.0 / m**2) * (wyy.sum(axis=1)[:, None] * Y - wyy @ Y)
        gY += (2.0 / (n * m)) * (wxy.sum(axis=0)[:, None] * Y - wxy.T @ X)
    return float(value), gX, gY


def make_context(kind, batch: BatchForward, rng=None, max_pixels=MMD_MAX_PIXELS) -> PenaltyContext:
    """Freeze bandwidths and subsamples for one optimization step."""
    rng = np.random.default_rng(rng)
    ctx = PenaltyContext()
    pair = _group_pair(batch.groups)
    if pair is None:
        return ctx
    if kind == "mmd_feature":
        g0, g1 = pair
        rows = batch.gap
        sigma0 = median_pairwise_distance(rows)
        if sigma0 == 0.0:
            sigma0, ctx.degenerate_bandwidth = 1.0, True
        ctx.sigma0 = sigma0
    elif kind == "mmd_logit":
        g0, g1 = pair
        for cls in (0, 1):
            pools = {}
            for g in pair:
                img_idx, pix_idx = _class_group_pixels(batch, cls, g)
                if len(img_idx) == 0:
                    pools = None
                    break
                take = min(max_pixels, len(img_idx))
                sel = rng.choice(len(img_idx), size=take, replace=False)
                sel.sort()
                pools[g] = (img_idx[sel], pix_idx[sel])
            if pools is None:
                continue
            for g in pair:
                ctx.subsample[(cls, g)] = pools[g]
            z0 = _gather_logits(batch, ctx.subsample[(cls, g0)])
            z1 = _gather_logits(batch, ctx.subsample[(cls, g1)])
            sigma0 = median_pairwise_distance(np.concatenate([z0, z1])[:, None])
            if sigma0 == 0.0:
                sigma0, ctx.degenerate_bandwidth = 1.0, True
            ctx.sigma0_by_class[cls] = sigma0
    return ctx


def _class_group_pixels(batch, cls, group):
    img_idx, pix_idx = [], []
    for i, (g, t) in enumerate(zip(batch.groups, batch.targets)):
        if g != group:
            continue
        where = np.flatnonzero(t == cls)
        img_idx.append(np.full(len(where), i, dtype=np.int64))
        pix_idx.append(where)
    if not img_idx:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    return np.concatenate(img_idx), np.concatenate(pix_idx)


def _gather_logits(batch, idx):
    img_idx, pix_idx = idx
    return np.array([batch.logits[i][p] for i, p in zip(img_idx, pix_idx)])


def penalty_with_grads(kind, batch: BatchForward, ctx: PenaltyContext) -> PenaltyResult:
    pair = _group_pair(batch.groups)
    if pair is None:
        return PenaltyResult(value=0.0, single_group=True)
    if kind == "dp":
        return _dp(batch, pair)
    if kind == "eo":
        return _eo(batch, pair)
    if kind == "dp+eo":
        a = _dp(batch, pair)
        b = _eo(batch, pair)
        gz = [ga + gb for ga, gb in zip(a.gz, b.gz)]
        return PenaltyResult(value=a.value + b.value, gz=gz)
    if kind == "mmd_logit":
        return _mmd_logit(batch, ctx, pair)
    if kind == "coral":
        return _coral(batch, pair)
    if kind == "mmd_feature":
        return _mmd_feature(batch, ctx, pair)
    raise ValueError(f"unknown penalty kind {kind!r}")


def penalty_value(kind, batch: BatchForward, ctx=None, rng=None) -> float:
    """Scalar penalty; builds a fresh context when none is supplied."""
    if kind == "none":
        return 0.0
    if ctx is None:
        ctx = make_context(kind, batch, rng=rng)
    return penalty_with_grads(kind, batch, ctx).value


def _pixel_means(batch, group, mask_fn=None):
    """Mean probability over pooled pixels of a group, with pixel counts."""
    total, count = 0.0, 0
    for g, p, t in zip(batch.groups, batch.probs, batch.targets):
        if g != group:
            continue
        sel = slice(None) if mask_fn is None else mask_fn(t)
        vals = p[sel]
        total += vals.sum()
        count += vals.size
    return (total / count if count else None), count


def _dp(batch, pair):
    g0, g1 = pair
    m0, n0 = _pixel_means(batch, g0)
    m1, n1 = _pixel_means(batch, g1)
    value = abs(m0 - m1)
    s = np.sign(m0 - m1)
    gz = []
    for g, p in zip(batch.groups, batch.probs):
        coeff = s / n0 if g == g0 else -s / n1
        gz.append(coeff * p * (1.0 - p))
    return PenaltyResult(value=float(value), gz=gz)


def _eo(batch, pair):
    g0, g1 = pair
    value = 0.0
    coeffs = {}  # (group, cls) -> d(value)/d(mean)
    for cls in (1, 0):  # tpr over positives, fpr over negatives
        m0, n0 = _pixel_means(batch, g0, mask_fn=lambda t, c=cls: t == c)
        m1, n1 = _pixel_means(batch, g1, mask_fn=lambda t, c=cls: t == c)
        if m0 is None or m1 is None:
            continue
        value += abs(m0 - m1)
        s = np.sign(m0 - m1)
        coeffs[(g0, cls)] = s / n0
        coeffs[(g1, cls)] = -s / n1
    gz = []
    for g, p, t in zip(batch.groups, batch.probs, batch.targets):
        grad = np.zeros_like(p)
        for cls in (0, 1):
            if (g, cls) in coeffs:
                sel = t == cls
                grad[sel] = coeffs[(g, cls)] * p[sel] * (1.0 - p[sel])
        gz.append(grad)
    return PenaltyResult(value=float(value), gz=gz)


def _mmd_logit(batch, ctx, pair):
    g0, g1 = pair
    gz = [np.zeros_like(p) for p in batch.probs]
    value = 0.0
    used = 0
    for cls in (0, 1):
        key0, key1 = (cls, g0), (cls, g1)
        if key0 not in ctx.subsample or key1 not in ctx.subsample:
            continue
        z0 = _gather_logits(batch, ctx.subsample[key0])[:, None]
        z1 = _gather_logits(batch, ctx.subsample[key1])[:, None]
        v, gz0, gz1 = _mmd2_grads(z0, z1, ctx.sigma0_by_class[cls])
        value += v
        used += 1
        for (img_idx, pix_idx), grad in (
            (ctx.subsample[key0], gz0[:, 0]),
            (ctx.subsample[key1], gz1[:, 0]),
        ):
            for i, p_i, g_i in zip(img_idx, pix_idx, grad):
                gz[i][p_i] += g_i
    if used == 0:
        return PenaltyResult(value=0.0, single_group=True)
    inv = 1.0 / used
    return PenaltyResult(value=value * inv, gz=[g * inv for g in gz])


def _coral(batch, pair):
    g0, g1 = pair
    groups = np.asarray(batch.groups)
    idx0 = np.flatnonzero(groups == g0)
    idx1 = np.flatnonzero(groups == g1)
    if len(idx0) < 2 or len(idx1) < 2:
        return PenaltyResult(value=0.0, single_group=True)
    Z0 = batch.gap[idx0]
    Z1 = batch.gap[idx1]
    d = Z0.shape[1]
    A0 = Z0 - Z0.mean(axis=0)
    A1 = Z1 - Z1.mean(axis=0)
    C0 = A0.T @ A0 / (len(idx0) - 1)
    C1 = A1.T @ A1 / (len(idx1) - 1)
    D = C0 - C1
    value = float((D * D).sum() / (4.0 * d * d))
    ghid = np.zeros_like(batch.gap)
    ghid[idx0] = A0 @ D / (d * d * (len(idx0) - 1))
    ghid[idx1] = -A1 @ D / (d * d * (len(idx1) - 1))
    return PenaltyResult(value=value, ghid=ghid)


def _mmd_feature(batch, ctx, pair):
    g0, g1 = pair
    groups = np.asarray(batch.groups)
    idx0 = np.flatnonzero(groups == g0)
    idx1 = np.flatnonzero(groups == g1)
    if len(idx0) < 2 or len(idx1) < 2:
        return PenaltyResult(value=0.0, single_group=True)
    sigma0 = ctx.sigma0 if ctx.sigma0 is not None else 1.0
    value, gX, gY = _mmd2_grads(batch.gap[idx0], batch.gap[idx1], sigma0)
    ghid = np.zeros_like(batch.gap)
    ghid[idx0] = gX
    ghid[idx1] = gY
    return PenaltyResult(value=value, ghid=ghid)
