import importlib

import numpy as np
import pytest

from segbias import _kernels_py as pyk
from segbias.morphology import disk_offsets

compiled = pytest.importorskip("segbias._kernels", reason="compiled extension not built")


def random_mask(rng, h=33, w=29):
    return (rng.random((h, w)) < 0.5).astype(np.uint8)


def test_morphology_bit_exact_across_backends():
    rng = np.random.default_rng(0)
    for radius in (1, 2, 3):
        offs = disk_offsets(radius)
        for _ in range(10):
            m = random_mask(rng)
            assert np.array_equal(compiled.erode(m, offs), pyk.erode(m, offs))
            assert np.array_equal(compiled.dilate(m, offs), pyk.dilate(m, offs))


def test_patch_features_bit_exact():
    rng = np.random.default_rng(1)
    for half in (1, 2, 3):
        img = rng.uniform(0, 1, (17, 13))
        a = compiled.patch_features(img, half)
        b = pyk.patch_features(img, half)
        assert np.array_equal(a, b)


def model_params(rng, hd=16, feat=27):
    return (
        rng.normal(0, 0.3, (hd, feat)),
        rng.normal(0, 0.1, hd),
        rng.normal(1, 0.2, hd),
        rng.normal(0, 0.2, hd),
        rng.normal(0, 0.3, hd),
        float(rng.normal()),
    )


def test_forward_dense_agreement():
    rng = np.random.default_rng(2)
    img = rng.uniform(0, 1, (16, 16))
    X = pyk.patch_features(img, 2)
    W1, b1, gamma, beta, w2, b2 = model_params(rng)
    p_c, h_c = compiled.forward_dense(X, W1, b1, gamma, beta, w2, b2)
    p_p, h_p = pyk.forward_dense(X, W1, b1, gamma, beta, w2, b2)
    assert np.allclose(p_c, p_p, rtol=1e-12, atol=1e-14)
    assert np.allclose(h_c, h_p, rtol=1e-12, atol=1e-14)


def test_backward_dense_agreement():
    rng = np.random.default_rng(3)
    img = rng.uniform(0, 1, (16, 16))
    X = pyk.patch_features(img, 2)
    W1, b1, gamma, beta, w2, b2 = model_params(rng)
    _, hidden = pyk.forward_dense(X, W1, b1, gamma, beta, w2, b2)
    gz = rng.normal(0, 1e-3, X.shape[0])
    ghid = rng.normal(0, 1e-4, 16)
    out_c = compiled.backward_dense(X, hidden, gamma, beta, w2, gz, ghid)
    out_p = pyk.backward_dense(X, hidden, gamma, beta, w2, gz, ghid)
    for a, b in zip(out_c, out_p):
        assert np.allclose(a, b, rtol=1e-9, atol=1e-15)


def test_backend_env_override(monkeypatch):
    import segbias._backend as backend

    monkeypatch.setenv("SEGBIAS_BACKEND", "python")
    reloaded = importlib.reload(backend)
    try:
        assert reloaded.BACKEND_NAME == "python"
    finally:
        monkeypatch.delenv("SEGBIAS_BACKEND")
        importlib.reload(backend)


def test_available_backends():
    from segbias import available_backends

    names = available_backends()
    assert "python" in names
    assert "compiled" in names
