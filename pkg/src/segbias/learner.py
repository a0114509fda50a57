"""Group-conditioned pixel segmenter with hand-derived gradients.

The model is a one-hidden-layer network over per-pixel patch features.
Hidden activations are modulated per group by a learned channel-wise
affine transform (gamma, beta) before the readout, so group-specific
annotation style can be absorbed into the modulation parameters and
switched off at inference by conditioning every input on the clean group.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from ._backend import kernels
from .corpus import Corpus
from .errors import AllMaskedOutError, ConfigError, UnknownGroupError
from .morphology import boundary_band
from . import penalties as _pen

__all__ = [
    "FilmParams",
    "LearnerModel",
    "TrainConfig",
    "features",
    "forward",
    "seg_loss",
    "asym_weights",
    "loss_and_grad",
    "train",
    "auto_condition_train",
    "AutoConditionResult",
    "predict",
    "predict_mask",
    "gap_features",
    "save_model",
    "load_model",
    "write_history",
]

MITIGATIONS = ("none", "conditioned", "asym_mask", "combined", "auto")
PENALTIES = ("none", "dp", "eo", "dp+eo", "mmd_logit", "coral", "mmd_feature")

DICE_EPS = 1.0


@dataclass
class FilmParams:
    gamma: np.ndarray
    beta: np.ndarray


@dataclass
class LearnerModel:
    W1: np.ndarray  # (hidden_dim, feat_dim)
    b1: np.ndarray  # (hidden_dim,)
    film: dict  # group id -> FilmParams
    w2: np.ndarray  # (hidden_dim,)
    b2: float
    patch_half: int = 2

    @property
    def hidden_dim(self) -> int:
        return self.W1.shape[0]

    @property
    def feat_dim(self) -> int:
        return self.W1.shape[1]

    @property
    def group_ids(self):
        return sorted(self.film)

    def zeros_like(self) -> "LearnerModel":
        return LearnerModel(
            W1=np.zeros_like(self.W1),
            b1=np.zeros_like(self.b1),
            film={g: FilmParams(np.zeros_like(f.gamma), np.zeros_like(f.beta)) for g, f in self.film.items()},
            w2=np.zeros_like(self.w2),
            b2=0.0,
            patch_half=self.patch_half,
        )

    def copy(self) -> "LearnerModel":
        return LearnerModel(
            W1=self.W1.copy(),
            b1=self.b1.copy(),
            film={g: FilmParams(f.gamma.copy(), f.beta.copy()) for g, f in self.film.items()},
            w2=self.w2.copy(),
            b2=float(self.b2),
            patch_half=self.patch_half,
        )

    def to_vector(self) -> np.ndarray:
        parts = [self.W1.ravel(), self.b1, self.w2, np.array([self.b2])]
        for g in self.group_ids:
            parts.extend([self.film[g].gamma, self.film[g].beta])
        return np.concatenate(parts)

    def from_vector(self, vec: np.ndarray) -> "LearnerModel":
        h, f = self.W1.shape
        out = self.zeros_like()
        i = 0
        out.W1 = vec[i : i + h * f].reshape(h, f).copy()
        i += h * f
        out.b1 = vec[i : i + h].copy()
        i += h
        out.w2 = vec[i : i + h].copy()
        i += h
        out.b2 = float(vec[i])
        i += 1
        for g in self.group_ids:
            out.film[g] = FilmParams(vec[i : i + h].copy(), vec[i + h : i + 2 * h].copy())
            i += 2 * h
        return out


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    warmup_epochs: int = 5
    learning_rate: float = 0.05
    batch: int = 16
    boundary_width: int = 2
    mitigation: str = "none"
    biased_group: int | None = None
    penalty: str = "none"
    penalty_weight: float = 1.0
    dice_weight: float = 1.0
    hidden_dim: int = 16
    patch_half: int = 2
    seed: int = 0

    def validate(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.mitigation not in MITIGATIONS:
            raise ConfigError(f"unknown mitigation {self.mitigation!r}")
        if self.penalty not in PENALTIES:
            raise ConfigError(f"unknown penalty {self.penalty!r}")
        if self.penalty_weight < 0:
            raise ConfigError("penalty_weight must be >= 0")
        if self.mitigation == "auto" and not (1 <= self.warmup_epochs < self.epochs):
            raise ConfigError("auto mitigation needs 1 <= warmup_epochs < epochs")
        if self.mitigation in ("asym_mask", "combined") and self.biased_group is None:
            raise ConfigError(f"mitigation {self.mitigation!r} requires biased_group")
        if self.batch < 1:
            raise ConfigError("batch must be >= 1")
        if self.boundary_width < 1:
            raise ConfigError("boundary_width must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if self.hidden_dim < 1 or self.patch_half < 0:
            raise ConfigError("bad architecture dimensions")


def init_model(groups, hidden_dim=16, patch_half=2, seed=0) -> LearnerModel:
    """Seeded init; modulation starts at identity (gamma 1, beta 0)."""
    feat_dim = (2 * patch_half + 1) ** 2 + 2
    rng = np.random.default_rng(seed)
    W1 = rng.normal(0.0, 1.0 / np.sqrt(feat_dim), size=(hidden_dim, feat_dim))
    w2 = rng.normal(0.0, 1.0 / np.sqrt(hidden_dim), size=hidden_dim)
    film = {int(g): FilmParams(np.ones(hidden_dim), np.zeros(hidden_dim)) for g in groups}
    return LearnerModel(W1=W1, b1=np.zeros(hidden_dim), film=film, w2=w2, b2=0.0, patch_half=patch_half)


def features(image, patch_half=2) -> np.ndarray:
    """Per-pixel features: flattened edge-clamped patch plus normalized coords."""
    return kernels.patch_features(np.asarray(image, dtype=np.float64), patch_half)


def forward(model: LearnerModel, image, group, condition_group=None):
    """Returns (probability map, pre-modulation hidden activations)."""
    g = group if condition_group is None else condition_group
    if g not in model.film:
        raise UnknownGroupError(f"no conditioning parameters for group {g!r}")
    X = features(image, model.patch_half)
    film = model.film[g]
    p, hidden = kernels.forward_dense(X, model.W1, model.b1, film.gamma, film.beta, model.w2, model.b2)
    return p.reshape(np.asarray(image).shape), hidden


def predict(model: LearnerModel, image, force_group):
    """Probability map with conditioning forced to ``force_group``."""
    probs, _ = forward(model, image, group=force_group)
    return probs


def predict_mask(model: LearnerModel, image, force_group, threshold=0.5):
    """Thresholded prediction; exact ties go to background."""
    return (predict(model, image, force_group) > threshold).astype(np.uint8)


def gap_features(model: LearnerModel, image, group=None) -> np.ndarray:
    """Mean over all pixels of the pre-modulation hidden activation."""
    X = features(image, model.patch_half)
    g = model.group_ids[0] if group is None else group
    if g not in model.film:
        raise UnknownGroupError(f"no conditioning parameters for group {g!r}")
    film = model.film[g]
    _, hidden = kernels.forward_dense(X, model.W1, model.b1, film.gamma, film.beta, model.w2, model.b2)
    return hidden.mean(axis=0)


def _xlogy(x, y):
    out = np.zeros_like(y, dtype=np.float64)
    nz = x != 0
    out[nz] = x[nz] * np.log(y[nz])
    return out


def seg_loss(prob, target, weights=None, dice_weight=1.0) -> float:
    """Weighted mean cross-entropy plus weighted soft-Dice loss.

    Weights are scale-free: they are normalized to unit mean before the
    smoothed Dice ratio, so scaling all weights by any c > 0 changes
    nothing. Raises AllMaskedOutError when every weight is zero.
    """
    p = np.asarray(prob, dtype=np.float64).ravel()
    t = np.asarray(target, dtype=np.float64).ravel()
    if p.shape != t.shape:
        raise ValueError("probability map and target must have the same size")
    w = np.ones_like(p) if weights is None else np.asarray(weights, dtype=np.float64).ravel()
    sw = w.sum()
    if sw <= 0:
        raise AllMaskedOutError("sum of pixel weights is zero")
    ce = -(w * (_xlogy(t, p) + _xlogy(1.0 - t, 1.0 - p))).sum() / sw
    wn = w * (w.size / sw)
    inter = 2.0 * (wn * p * t).sum() + DICE_EPS
    denom = (wn * p).sum() + (wn * t).sum() + DICE_EPS
    return float(ce + dice_weight * (1.0 - inter / denom))


def _seg_loss_and_gz(p, t, w, dice_weight):
    """Per-sample loss plus its gradient w.r.t. the pixel logits."""
    sw = w.sum()
    if sw <= 0:
        raise AllMaskedOutError("sum of pixel weights is zero")
    eps = 1e-12
    pc = np.clip(p, eps, 1.0 - eps)
    ce = -(w * (t * np.log(pc) + (1.0 - t) * np.log(1.0 - pc))).sum() / sw
    gz = w * (p - t) / sw  # d(ce)/dz

    wn = w * (w.size / sw)
    A = (wn * p * t).sum()
    B = (wn * p).sum() + (wn * t).sum()
    dice_loss = 1.0 - (2.0 * A + DICE_EPS) / (B + DICE_EPS)
    # d(dice)/dp then chain through the sigmoid
    dd_dp = -wn * (2.0 * t * (B + DICE_EPS) - (2.0 * A + DICE_EPS)) / (B + DICE_EPS) ** 2
    gz = gz + dice_weight * dd_dp * p * (1.0 - p)
    return float(ce + dice_weight * dice_loss), gz


def asym_weights(mask_obs, group, biased_group, width) -> np.ndarray:
    """Loss weights that drop the boundary band of biased-group samples.

    Biased-group samples get weight 0 on the band around their observed
    boundary and 1 elsewhere; reference-group samples get all ones, so
    fine boundary supervision flows only from the clean annotations.
    """
    mask_obs = np.asarray(mask_obs)
    if group != biased_group:
        return np.ones(mask_obs.shape, dtype=np.float64)
    return 1.0 - boundary_band(mask_obs, width).astype(np.float64)


@dataclass
class BatchItem:
    image: np.ndarray
    target: np.ndarray
    group: int
    weights: np.ndarray | None = None


def loss_and_grad(model: LearnerModel, batch, config: TrainConfig, *, lambda_value=None, penalty_ctx=None, rng=None):
    """Total loss over a batch and its exact gradient in model layout.

    The total is the mean per-sample segmentation loss plus
    ``lambda_value`` times the configured penalty. When a penalty needs a
    bandwidth or a pixel subsample, these come from ``penalty_ctx`` (built
    from ``rng`` when absent) and are treated as constants of the step, so
    the returned gradient is the exact derivative of the returned loss at
    fixed context.
    """
    total, grads, _ = _loss_and_grad_full(
        model, batch, config, lambda_value=lambda_value, penalty_ctx=penalty_ctx, rng=rng
    )
    return total, grads


def _loss_and_grad_full(model: LearnerModel, batch, config: TrainConfig, *, lambda_value=None, penalty_ctx=None, rng=None):
    if not batch:
        raise ConfigError("batch must be non-empty")
    lam = config.penalty_weight if lambda_value is None else lambda_value
    use_penalty = config.penalty != "none" and lam > 0

    n = len(batch)
    Xs, hiddens, probs, targets, wts, groups = [], [], [], [], [], []
    for item in batch:
        if item.group not in model.film:
            raise UnknownGroupError(f"no conditioning parameters for group {item.group!r}")
        X = features(item.image, model.patch_half)
        film = model.film[item.group]
        p, hidden = kernels.forward_dense(X, model.W1, model.b1, film.gamma, film.beta, model.w2, model.b2)
        Xs.append(X)
        hiddens.append(hidden)
        probs.append(p)
        targets.append(np.asarray(item.target, dtype=np.float64).ravel())
        w = np.ones_like(p) if item.weights is None else np.asarray(item.weights, dtype=np.float64).ravel()
        wts.append(w)
        groups.append(item.group)

    sample_losses = []
    gzs = []
    for p, t, w in zip(probs, targets, wts):
        loss_i, gz_i = _seg_loss_and_gz(p, t, w, config.dice_weight)
        sample_losses.append(loss_i)
        gzs.append(gz_i / n)
    total = float(np.mean(sample_losses))

    ghids = [None] * n
    if use_penalty:
        bf = _pen.BatchForward(
            groups=groups,
            probs=probs,
            targets=targets,
            logits=None,
            gap=np.stack([h.mean(axis=0) for h in hiddens]),
        )
        if config.penalty == "mmd_logit":
            bf.logits = [
                (h * model.film[g].gamma + model.film[g].beta) @ model.w2 + model.b2
                for h, g in zip(hiddens, groups)
            ]
        if penalty_ctx is None:
            penalty_ctx = _pen.make_context(config.penalty, bf, rng=rng)
        res = _pen.penalty_with_grads(config.penalty, bf, penalty_ctx)
        total += lam * res.value
        if res.gz is not None:
            gzs = [gz + lam * pg for gz, pg in zip(gzs, res.gz)]
        if res.ghid is not None:
            npix = [h.shape[0] for h in hiddens]
            ghids = [lam * res.ghid[i] / npix[i] for i in range(n)]

    grads = model.zeros_like()
    zero_ghid = np.zeros(model.hidden_dim)
    for i in range(n):
        film = model.film[groups[i]]
        ghid = zero_ghid if ghids[i] is None else ghids[i]
        dW1, db1, dgamma, dbeta, dw2, db2 = kernels.backward_dense(
            Xs[i], hiddens[i], film.gamma, film.beta, model.w2, gzs[i], ghid
        )
        grads.W1 += dW1
        grads.b1 += db1
        grads.w2 += dw2
        grads.b2 += db2
        grads.film[groups[i]].gamma += dgamma
        grads.film[groups[i]].beta += dbeta
    return total, grads, sample_losses


def _film_slice_mask(model: LearnerModel) -> np.ndarray:
    """Boolean vector marking modulation parameters in the flat layout."""
    h, f = model.W1.shape
    n_shared = h * f + h + h + 1
    mask = np.zeros(n_shared + 2 * h * len(model.film), dtype=bool)
    mask[n_shared:] = True
    return mask


def _lambda_at(step, total_steps, weight):
    """Linear ramp from 0 to the full weight over the first half of training."""
    half = max(total_steps // 2, 1)
    return weight * min(1.0, step / half)


@dataclass
class HistoryRow:
    epoch: int
    group: int
    mean_loss: float
    phase: str


@dataclass
class AutoConditionResult:
    model: LearnerModel
    clean_group: int
    low_confidence: bool
    history: list
    warmup_losses: dict


def train(corpus: Corpus, config: TrainConfig):
    """Mini-batch Adam over the corpus; deterministic given the seed.

    Returns (model, history) where history holds per-epoch per-group mean
    segmentation losses. ``mitigation`` selects whether the modulation
    parameters are trained and whether boundary-band weights are applied.
    """
    config.validate()
    if config.mitigation == "auto":
        result = auto_condition_train(corpus, config)
        return result.model, result.history
    film_trainable = config.mitigation in ("conditioned", "combined")
    masked = config.mitigation in ("asym_mask", "combined")
    model, history, _ = _fit(
        corpus,
        config,
        film_trainable=film_trainable,
        weight_group=(config.biased_group if masked else None),
        switch_epoch=0,
    )
    return model, history


def auto_condition_train(corpus: Corpus, config: TrainConfig) -> AutoConditionResult:
    """Warm up with native conditioning, discover the easier-to-fit group,
    then continue with boundary masking aimed at the other group.

    The discovered clean group is the argmin of mean per-sample warm-up
    loss; ties within 1e-9 go to the lower group id, and the result is
    flagged low-confidence when the gap is below 1e-3.
    """
    config = replace(config, mitigation="auto")
    config.validate()
    model, history, warmup_losses = _fit(
        corpus,
        config,
        film_trainable=True,
        weight_group="discover",
        switch_epoch=config.warmup_epochs,
    )
    clean, low_confidence = _discover_clean(warmup_losses)
    return AutoConditionResult(
        model=model,
        clean_group=clean,
        low_confidence=low_confidence,
        history=history,
        warmup_losses=warmup_losses,
    )


def _discover_clean(means: dict):
    """Group with the lower mean warm-up loss; ties go to the lower id."""
    ids = sorted(means)
    gap = abs(means[ids[0]] - means[ids[1]])
    if gap < 1e-9:
        clean = ids[0]
    else:
        clean = min(ids, key=lambda g: means[g])
    return clean, gap < 1e-3


def _fit(corpus, config, *, film_trainable, weight_group, switch_epoch):
    samples = list(corpus)
    if not samples:
        raise ConfigError("corpus is empty")
    groups = sorted({s.group for s in samples})
    model = init_model(groups, config.hidden_dim, config.patch_half, seed=config.seed)
    theta = model.to_vector()
    film_mask = _film_slice_mask(model)

    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    rng = np.random.default_rng(config.seed)
    n = len(samples)
    steps_per_epoch = (n + config.batch - 1) // config.batch
    total_steps = steps_per_epoch * config.epochs

    discovering = weight_group == "discover"
    target_group = None if discovering else weight_group
    warmup_acc = {g: [] for g in groups}
    warmup_means = None
    history = []
    step = 0
    for epoch in range(config.epochs):
        in_warmup = discovering and epoch < switch_epoch
        order = rng.permutation(n)
        epoch_losses = {g: [] for g in groups}
        for start in range(0, n, config.batch):
            batch = []
            batch_samples = [samples[j] for j in order[start : start + config.batch]]
            for s in batch_samples:
                weights = None
                if target_group is not None and not in_warmup:
                    weights = asym_weights(s.mask_obs, s.group, target_group, config.boundary_width)
                batch.append(BatchItem(image=s.image, target=s.mask_obs, group=s.group, weights=weights))
            lam = _lambda_at(step, total_steps, config.penalty_weight)
            use_pen = config.penalty != "none" and not in_warmup
            cfg = config if use_pen else replace(config, penalty="none")
            loss, grads, sample_losses = _loss_and_grad_full(model, batch, cfg, lambda_value=lam, rng=rng)
            for s, li in zip(batch_samples, sample_losses):
                epoch_losses[s.group].append(li)
                if in_warmup:
                    warmup_acc[s.group].append(li)
            g = grads.to_vector()
            if not film_trainable:
                g[film_mask] = 0.0
            step += 1
            m = beta1 * m + (1 - beta1) * g
            v = beta2 * v + (1 - beta2) * g * g
            mh = m / (1 - beta1**step)
            vh = v / (1 - beta2**step)
            theta = theta - config.learning_rate * mh / (np.sqrt(vh) + eps)
            model = model.from_vector(theta)
        phase = "warmup" if in_warmup else "main"
        for g in groups:
            history.append(HistoryRow(epoch=epoch, group=g, mean_loss=float(np.mean(epoch_losses[g])), phase=phase))
        if discovering and epoch == switch_epoch - 1:
            warmup_means = {g: float(np.mean(warmup_acc[g])) for g in groups}
            clean, _ = _discover_clean(warmup_means)
            target_group = 1 - clean
    return model, history, warmup_means


def save_model(model: LearnerModel, json_path):
    """Checkpoint: JSON header plus a little-endian float64 parameter blob."""
    blob_path = os.path.splitext(str(json_path))[0] + ".bin"
    vec = model.to_vector().astype("<f8")
    with open(blob_path, "wb") as f:
        f.write(vec.tobytes())
    header = {
        "hidden_dim": model.hidden_dim,
        "feat_dim": model.feat_dim,
        "patch_half": model.patch_half,
        "groups": model.group_ids,
        "n_params": int(vec.size),
        "blob": os.path.basename(blob_path),
    }
    with open(json_path, "w", encoding="ascii") as f:
        json.dump(header, f, indent=2)
        f.write("\n")
    return json_path


def load_model(json_path) -> LearnerModel:
    with open(json_path, "r", encoding="ascii") as f:
        header = json.load(f)
    blob_path = os.path.join(os.path.dirname(os.path.abspath(str(json_path))), header["blob"])
    vec = np.frombuffer(open(blob_path, "rb").read(), dtype="<f8").astype(np.float64)
    if vec.size != header["n_params"]:
        raise ConfigError("checkpoint blob size does not match header")
    h, f = header["hidden_dim"], header["feat_dim"]
    template = LearnerModel(
        W1=np.zeros((h, f)),
        b1=np.zeros(h),
        film={int(g): FilmParams(np.ones(h), np.zeros(h)) for g in header["groups"]},
        w2=np.zeros(h),
        b2=0.0,
        patch_half=header["patch_half"],
    )
    return template.from_vector(vec)


def write_history(path, history):
    with open(path, "w", newline="", encoding="ascii") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "group", "mean_loss", "phase"])
        for row in history:
            writer.writerow([row.epoch, row.group, repr(row.mean_loss), row.phase])
