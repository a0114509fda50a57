import math

import numpy as np
import pytest

from segbias.corpus import GenConfig, generate
from segbias.errors import AllMaskedOutError, ConfigError, UnknownGroupError
from segbias import learner as L


def tiny_model(seed=0, hidden=4, patch_half=1, groups=(0, 1)):
    return L.init_model(groups, hidden_dim=hidden, patch_half=patch_half, seed=seed)


def scalar_forward(model, image, group):
    """Independent per-pixel reimplementation of the forward pass."""
    img = np.asarray(image, dtype=float)
    h, w = img.shape
    ph = model.patch_half
    padded = np.pad(img, ph, mode="edge")
    film = model.film[group]
    probs = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            patch = [
                padded[y + ph + dy, x + ph + dx]
                for dy in range(-ph, ph + 1)
                for dx in range(-ph, ph + 1)
            ]
            feats = patch + [x / max(w - 1, 1), y / max(h - 1, 1)]
            z = model.b2
            for j in range(model.hidden_dim):
                a = model.b1[j] + sum(model.W1[j, c] * feats[c] for c in range(len(feats)))
                hval = max(a, 0.0)
                z += (film.gamma[j] * hval + film.beta[j]) * model.w2[j]
            probs[y, x] = 1.0 / (1.0 + math.exp(-z))
    return probs


def test_forward_matches_scalar_oracle():
    rng = np.random.default_rng(3)
    model = tiny_model(seed=1)
    for g in model.film:
        model.film[g].gamma[:] = rng.normal(1, 0.4, model.hidden_dim)
        model.film[g].beta[:] = rng.normal(0, 0.4, model.hidden_dim)
    img = rng.uniform(0, 1, (8, 8))
    probs, hidden = L.forward(model, img, group=1)
    assert probs.shape == (8, 8)
    assert hidden.shape == (64, model.hidden_dim)
    assert np.allclose(probs, scalar_forward(model, img, 1), atol=1e-12)


def test_forward_film_identity_equals_unconditioned():
    model = tiny_model()
    img = np.random.default_rng(0).uniform(0, 1, (6, 6))
    p0, h0 = L.forward(model, img, group=0)
    p1, h1 = L.forward(model, img, group=1)
    assert np.array_equal(p0, p1)
    assert np.array_equal(h0, h1)


def test_forward_override_matches_native():
    rng = np.random.default_rng(5)
    model = tiny_model()
    model.film[0].gamma[:] = rng.normal(1, 0.3, model.hidden_dim)
    model.film[0].beta[:] = rng.normal(0, 0.3, model.hidden_dim)
    img = rng.uniform(0, 1, (6, 6))
    a, _ = L.forward(model, img, group=1, condition_group=0)
    b, _ = L.forward(model, img, group=0)
    assert np.array_equal(a, b)


def test_forward_unknown_group():
    model = tiny_model()
    with pytest.raises(UnknownGroupError):
        L.forward(model, np.zeros((4, 4)), group=7)


def test_seg_loss_perfect_prediction():
    t = np.array([[0, 1], [1, 0]], dtype=np.uint8)
    assert L.seg_loss(t.astype(float), t) == pytest.approx(0.0, abs=1e-12)


def test_seg_loss_uniform_half():
    t = np.array([[0, 1], [1, 0]], dtype=np.uint8)
    p = np.full((2, 2), 0.5)
    loss = L.seg_loss(p, t, dice_weight=0.0)
    assert loss == pytest.approx(math.log(2))


def test_seg_loss_matches_direct_summation():
    rng = np.random.default_rng(1)
    p = rng.uniform(0.05, 0.95, (4, 4))
    t = (rng.uniform(0, 1, (4, 4)) > 0.5).astype(float)
    w = rng.uniform(0.1, 2.0, (4, 4))
    dw = 1.7
    # direct summation oracle
    sw = w.sum()
    ce = -(w * (t * np.log(p) + (1 - t) * np.log(1 - p))).sum() / sw
    wn = w * w.size / sw
    dice = 1.0 - (2 * (wn * p * t).sum() + 1.0) / ((wn * p).sum() + (wn * t).sum() + 1.0)
    assert L.seg_loss(p, t, w, dice_weight=dw) == pytest.approx(ce + dw * dice, abs=1e-12)


def test_seg_loss_weight_scale_invariance():
    rng = np.random.default_rng(2)
    p = rng.uniform(0.05, 0.95, (5, 5))
    t = (rng.uniform(0, 1, (5, 5)) > 0.4).astype(float)
    w = rng.uniform(0.0, 1.0, (5, 5))
    a = L.seg_loss(p, t, w)
    b = L.seg_loss(p, t, 2.0 * w)
    assert a == pytest.approx(b, rel=1e-12)


def test_seg_loss_all_masked():
    with pytest.raises(AllMaskedOutError):
        L.seg_loss(np.full((3, 3), 0.5), np.zeros((3, 3)), np.zeros((3, 3)))


def test_asym_weights():
    mask = np.zeros((5, 5), np.uint8)
    mask[1:4, 1:4] = 1
    # reference-group sample keeps full supervision
    assert np.all(L.asym_weights(mask, group=0, biased_group=1, width=1) == 1.0)
    w = L.asym_weights(mask, group=1, biased_group=1, width=1)
    assert (w == 0).sum() == 20  # boundary band of the block
    assert np.all(L.asym_weights(np.zeros((5, 5), np.uint8), 1, 1, 1) == 1.0)


def make_batch(rng, n=4, size=6, groups=(0, 1, 0, 1)):
    items = []
    for i in range(n):
        img = rng.uniform(0, 1, (size, size))
        t = (rng.uniform(0, 1, (size, size)) > 0.6).astype(np.uint8)
        w = rng.uniform(0.2, 1.0, (size, size)) if i % 2 else None
        items.append(L.BatchItem(image=img, target=t, group=groups[i], weights=w))
    return items


def fd_gradient(model, batch, cfg, ctx, eps=1e-5):
    theta = model.to_vector()
    fd = np.zeros_like(theta)
    for i in range(len(theta)):
        tp = theta.copy()
        tp[i] += eps
        tm = theta.copy()
        tm[i] -= eps
        lp, _ = L.loss_and_grad(model.from_vector(tp), batch, cfg, penalty_ctx=ctx)
        lm, _ = L.loss_and_grad(model.from_vector(tm), batch, cfg, penalty_ctx=ctx)
        fd[i] = (lp - lm) / (2 * eps)
    return fd


def build_ctx(model, batch, cfg, seed=3):
    """Penalty context frozen from the current forward pass."""
    from segbias import penalties as P
    from segbias._backend import kernels

    hs, ps, ts, gs = [], [], [], []
    for it in batch:
        X = L.features(it.image, model.patch_half)
        f = model.film[it.group]
        p, h = kernels.forward_dense(X, model.W1, model.b1, f.gamma, f.beta, model.w2, model.b2)
        hs.append(h)
        ps.append(p)
        ts.append(np.asarray(it.target, float).ravel())
        gs.append(it.group)
    bf = P.BatchForward(groups=gs, probs=ps, targets=ts, logits=None, gap=np.stack([h.mean(0) for h in hs]))
    if cfg.penalty == "mmd_logit":
        bf.logits = [
            (h * model.film[g].gamma + model.film[g].beta) @ model.w2 + model.b2
            for h, g in zip(hs, gs)
        ]
    return P.make_context(cfg.penalty, bf, rng=np.random.default_rng(seed))


@pytest.mark.parametrize("penalty", ["none", "dp", "eo", "dp+eo", "coral", "mmd_feature", "mmd_logit"])
def test_gradients_match_finite_differences(penalty):
    rng = np.random.default_rng(hash(penalty) % (2**31))
    for trial in range(3):
        model = tiny_model(seed=trial + 1)
        for g in model.film:
            model.film[g].gamma[:] = rng.normal(1, 0.3, model.hidden_dim)
            model.film[g].beta[:] = rng.normal(0, 0.3, model.hidden_dim)
        batch = make_batch(rng)
        cfg = L.TrainConfig(penalty=penalty, penalty_weight=0.8, dice_weight=1.2, hidden_dim=4, patch_half=1)
        ctx = build_ctx(model, batch, cfg) if penalty != "none" else None
        _, grads = L.loss_and_grad(model, batch, cfg, penalty_ctx=ctx)
        gvec = grads.to_vector()
        fd = fd_gradient(model, batch, cfg, ctx)
        denom = np.maximum(np.abs(fd), np.abs(gvec))
        rel = np.abs(gvec - fd) / np.where(denom > 1e-8, denom, 1.0)
        assert rel.max() < 1e-4


def test_zero_penalty_weight_equals_pure_seg_loss():
    rng = np.random.default_rng(0)
    model = tiny_model(seed=2)
    batch = make_batch(rng)
    base_cfg = L.TrainConfig(penalty="none", hidden_dim=4, patch_half=1)
    dp_cfg = L.TrainConfig(penalty="dp", penalty_weight=1.0, hidden_dim=4, patch_half=1)
    l0, g0 = L.loss_and_grad(model, batch, base_cfg)
    l1, g1 = L.loss_and_grad(model, batch, dp_cfg, lambda_value=0.0)
    assert l0 == pytest.approx(l1, abs=1e-15)
    assert np.allclose(g0.to_vector(), g1.to_vector())


def test_weight_doubling_leaves_loss_and_grad_unchanged():
    rng = np.random.default_rng(4)
    model = tiny_model(seed=3)
    size = 6
    img = rng.uniform(0, 1, (size, size))
    t = (rng.uniform(0, 1, (size, size)) > 0.5).astype(np.uint8)
    w = rng.uniform(0.1, 1.0, (size, size))
    cfg = L.TrainConfig(hidden_dim=4, patch_half=1)
    l1, g1 = L.loss_and_grad(model, [L.BatchItem(img, t, 0, w)], cfg)
    l2, g2 = L.loss_and_grad(model, [L.BatchItem(img, t, 0, 2.0 * w)], cfg)
    assert l1 == pytest.approx(l2, rel=1e-12)
    assert np.allclose(g1.to_vector(), g2.to_vector(), rtol=1e-9, atol=1e-12)


def small_corpus(seed=0, n=16, size=16):
    return generate(GenConfig(n_samples=n, width=size, height=size, noise_sigma=0.05, seed=seed))


def test_train_descends_and_is_deterministic():
    corpus = small_corpus()
    cfg = L.TrainConfig(epochs=4, batch=4, seed=7, hidden_dim=8)
    m1, h1 = L.train(corpus, cfg)
    m2, h2 = L.train(corpus, cfg)
    assert np.array_equal(m1.to_vector(), m2.to_vector())
    first = np.mean([r.mean_loss for r in h1 if r.epoch == 0])
    last = np.mean([r.mean_loss for r in h1 if r.epoch == cfg.epochs - 1])
    assert last < first


def test_train_validates_config():
    corpus = small_corpus()
    with pytest.raises(ConfigError):
        L.train(corpus, L.TrainConfig(mitigation="asym_mask"))  # needs biased_group
    with pytest.raises(ConfigError):
        L.train(corpus, L.TrainConfig(mitigation="auto", warmup_epochs=30, epochs=20))


def test_auto_history_shape_and_phases():
    corpus = small_corpus()
    cfg = L.TrainConfig(epochs=4, warmup_epochs=2, batch=4, seed=1, hidden_dim=8, mitigation="auto")
    res = L.auto_condition_train(corpus, cfg)
    assert len(res.history) == 4 * 2
    phases = {(r.epoch, r.phase) for r in res.history}
    for e in range(2):
        assert (e, "warmup") in phases
    for e in range(2, 4):
        assert (e, "main") in phases
    assert res.clean_group in (0, 1)


def test_auto_tie_break_on_symmetric_corpus():
    # identical loss statistics per group force the tie-break path
    corpus = small_corpus(seed=3)
    cfg = L.TrainConfig(epochs=3, warmup_epochs=1, batch=4, seed=2, hidden_dim=8, mitigation="auto")
    res = L.auto_condition_train(corpus, cfg)
    if abs(res.warmup_losses[0] - res.warmup_losses[1]) < 1e-3:
        assert res.low_confidence


def test_gap_features_constant_image_and_mean():
    model = tiny_model(seed=5)
    img = np.full((5, 7), 0.3)
    feats = L.gap_features(model, img)
    _, hidden = L.forward(model, img, group=0)
    assert np.allclose(feats, hidden.mean(axis=0), atol=1e-12)
    # brute-force mean oracle
    acc = np.zeros(model.hidden_dim)
    for row in hidden:
        acc += row
    assert np.allclose(feats, acc / hidden.shape[0], atol=1e-12)


def test_gap_features_zero_weights_model():
    model = tiny_model(seed=6)
    model.W1[:] = 0.0
    model.b1[:] = np.array([0.5, -0.5, 1.0, 0.0])
    feats = L.gap_features(model, np.random.default_rng(0).uniform(0, 1, (4, 4)))
    assert np.allclose(feats, np.maximum(model.b1, 0.0))


def test_predict_mask_threshold():
    model = tiny_model(seed=8)
    img = np.random.default_rng(1).uniform(0, 1, (5, 5))
    probs = L.predict(model, img, force_group=0)
    mask = L.predict_mask(model, img, force_group=0)
    assert np.array_equal(mask, (probs > 0.5).astype(np.uint8))


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(9)
    model = tiny_model(seed=10)
    model.film[1].gamma[:] = rng.normal(1, 0.2, model.hidden_dim)
    path = tmp_path / "model.json"
    L.save_model(model, path)
    back = L.load_model(path)
    assert np.array_equal(back.to_vector(), model.to_vector())
    assert back.patch_half == model.patch_half
    assert back.group_ids == model.group_ids


def test_history_csv(tmp_path):
    corpus = small_corpus()
    cfg = L.TrainConfig(epochs=2, batch=8, seed=1, hidden_dim=4)
    _, hist = L.train(corpus, cfg)
    path = tmp_path / "history.csv"
    L.write_history(path, hist)
    lines = open(path).read().strip().splitlines()
    assert lines[0] == "epoch,group,mean_loss,phase"
    assert len(lines) == 1 + 2 * 2
