import numpy as np
import pytest

from segbias import penalties as P


def make_batch(rng, n=6, pixels=50, d=4, groups=None):
    groups = groups or [0, 1, 0, 1, 0, 1][:n]
    probs = [rng.uniform(0.05, 0.95, pixels) for _ in range(n)]
    targets = [(rng.uniform(0, 1, pixels) > 0.5).astype(float) for _ in range(n)]
    logits = [np.log(p / (1 - p)) for p in probs]
    gap = rng.normal(0, 1, (n, d))
    return P.BatchForward(groups=groups, probs=probs, targets=targets, logits=logits, gap=gap)


def test_dp_zero_at_equal_means():
    rng = np.random.default_rng(0)
    batch = make_batch(rng, n=2, groups=[0, 1])
    batch.probs[1] = batch.probs[0].copy()
    assert P.penalty_value("dp", batch) == pytest.approx(0.0)


def test_eo_zero_at_equal_rates():
    rng = np.random.default_rng(1)
    batch = make_batch(rng, n=2, groups=[0, 1])
    batch.probs[1] = batch.probs[0].copy()
    batch.targets[1] = batch.targets[0].copy()
    assert P.penalty_value("eo", batch) == pytest.approx(0.0)


def test_identical_group_distributions_zero_coral_and_mmd():
    rng = np.random.default_rng(2)
    batch = make_batch(rng, n=4, groups=[0, 0, 1, 1])
    batch.gap[2] = batch.gap[0]
    batch.gap[3] = batch.gap[1]
    assert P.penalty_value("coral", batch) == pytest.approx(0.0, abs=1e-12)
    assert P.penalty_value("mmd_feature", batch) == pytest.approx(0.0, abs=1e-12)


def test_single_group_batch_flagged():
    rng = np.random.default_rng(3)
    batch = make_batch(rng, n=2, groups=[0, 0])
    for kind in ("dp", "eo", "coral", "mmd_feature", "mmd_logit"):
        ctx = P.make_context(kind, batch, rng=np.random.default_rng(0))
        res = P.penalty_with_grads(kind, batch, ctx)
        assert res.value == 0.0
        assert res.single_group


def test_mmd2_identical_and_symmetry():
    rng = np.random.default_rng(4)
    X = rng.normal(0, 1, (20, 3))
    v, sigma0, degenerate = P.mmd2_multiscale(X, X.copy())
    assert abs(v) < 1e-12
    assert not degenerate
    Y = rng.normal(1, 1, (15, 3))
    vxy, s1, _ = P.mmd2_multiscale(X, Y)
    vyx, s2, _ = P.mmd2_multiscale(Y, X)
    assert vxy == pytest.approx(vyx, rel=1e-12)
    assert s1 == pytest.approx(s2)
    assert vxy >= -1e-12


def test_mmd2_matches_double_loop_oracle():
    rng = np.random.default_rng(5)
    X = rng.normal(0, 1, (12, 2))
    Y = rng.normal([10.0, 0.0], 1, (9, 2))
    sigma0 = 2.5
    value, _, _ = P.mmd2_multiscale(X, Y, sigma0=sigma0)
    # independent O(N^2) kernel-sum oracle
    total = 0.0
    for s in (-2, -1, 0, 1, 2):
        sig2 = (sigma0 * 2.0**s) ** 2
        kxx = sum(
            np.exp(-((X[i] - X[j]) ** 2).sum() / (2 * sig2)) for i in range(len(X)) for j in range(len(X))
        ) / len(X) ** 2
        kyy = sum(
            np.exp(-((Y[i] - Y[j]) ** 2).sum() / (2 * sig2)) for i in range(len(Y)) for j in range(len(Y))
        ) / len(Y) ** 2
        kxy = sum(
            np.exp(-((X[i] - Y[j]) ** 2).sum() / (2 * sig2)) for i in range(len(X)) for j in range(len(Y))
        ) / (len(X) * len(Y))
        total += kxx + kyy - 2 * kxy
    assert value == pytest.approx(total, abs=1e-9)


def test_mmd2_degenerate_bandwidth_flag():
    X = np.zeros((4, 2))
    Y = np.zeros((4, 2))
    v, sigma0, degenerate = P.mmd2_multiscale(X, Y)
    assert degenerate
    assert sigma0 == 1.0
    assert v == pytest.approx(0.0, abs=1e-12)


def test_median_pairwise_distance():
    pts = np.array([[0.0], [1.0], [3.0]])
    # pairwise distances 1, 3, 2 -> median 2
    assert P.median_pairwise_distance(pts) == pytest.approx(2.0)


def test_mmd_logit_subsample_cap():
    rng = np.random.default_rng(6)
    batch = make_batch(rng, n=2, pixels=700, groups=[0, 1])
    ctx = P.make_context("mmd_logit", batch, rng=np.random.default_rng(1), max_pixels=256)
    for key, (img_idx, pix_idx) in ctx.subsample.items():
        assert len(img_idx) <= 256
        assert len(img_idx) == len(pix_idx)
    res = P.penalty_with_grads("mmd_logit", batch, ctx)
    assert res.value >= 0.0
    assert res.gz is not None


def test_coral_value_formula():
    rng = np.random.default_rng(7)
    batch = make_batch(rng, n=8, d=3, groups=[0, 0, 0, 0, 1, 1, 1, 1])
    Z0, Z1 = batch.gap[:4], batch.gap[4:]
    c0 = np.cov(Z0, rowvar=False)
    c1 = np.cov(Z1, rowvar=False)
    d = 3
    expected = ((c0 - c1) ** 2).sum() / (4 * d * d)
    assert P.penalty_value("coral", batch) == pytest.approx(expected, rel=1e-12)
