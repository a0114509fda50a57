import numpy as np
import pytest

from segbias.errors import TooFewPixelsError, UndefinedItaError
from segbias.tone import (
    LabColor,
    ToneGroup,
    classify,
    dominant_color,
    ita,
    rgb_image_to_lab,
    rgb_to_lab,
)


def test_white_point():
    lab = rgb_to_lab(255, 255, 255)
    assert lab.L == pytest.approx(100.0, abs=1e-3)
    assert abs(lab.a) < 0.01
    assert abs(lab.b) < 0.01


def test_black_point():
    lab = rgb_to_lab(0, 0, 0)
    assert lab.L == pytest.approx(0.0, abs=1e-6)


def test_mid_gray_reference_value():
    # published sRGB colorimetry: (128,128,128) has L* near 53.59
    lab = rgb_to_lab(128, 128, 128)
    assert lab.L == pytest.approx(53.59, abs=0.1)
    assert abs(lab.a) < 0.01
    assert abs(lab.b) < 0.01


def test_image_conversion_matches_scalar():
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, size=(4, 5, 3)).astype(np.uint8)
    lab = rgb_image_to_lab(img)
    for y in range(4):
        for x in range(5):
            ref = rgb_to_lab(*img[y, x])
            assert lab[y, x, 0] == pytest.approx(ref.L, abs=1e-9)
            assert lab[y, x, 1] == pytest.approx(ref.a, abs=1e-9)
            assert lab[y, x, 2] == pytest.approx(ref.b, abs=1e-9)


def test_ita_worked_examples():
    assert ita(LabColor(70, 0, 10)) == pytest.approx(63.4349, abs=1e-3)
    assert classify(ita(LabColor(70, 0, 10))) is ToneGroup.ST1_VERY_LIGHT
    assert ita(LabColor(60, 0, 20)) == pytest.approx(26.5651, abs=1e-3)
    assert classify(ita(LabColor(60, 0, 20))) is ToneGroup.ST4_TAN


def test_ita_zero_numerator():
    assert ita(LabColor(50, 0, 10)) == pytest.approx(0.0)
    assert classify(0.0) is ToneGroup.OUT_OF_RANGE


def test_ita_undefined():
    with pytest.raises(UndefinedItaError):
        ita(LabColor(50, 0, 0))


def test_ita_negative_b_out_of_range():
    angle = ita(LabColor(70, 0, -5))
    assert abs(angle) > 90
    assert classify(angle) is ToneGroup.OUT_OF_RANGE


def test_classify_breakpoints_exact():
    cases = [
        (10.0, ToneGroup.OUT_OF_RANGE),
        (10.0 + 1e-9, ToneGroup.ST4_TAN),
        (28.0, ToneGroup.ST4_TAN),
        (28.0 + 1e-9, ToneGroup.ST3_INTERMEDIATE),
        (41.0, ToneGroup.ST3_INTERMEDIATE),
        (41.0 + 1e-9, ToneGroup.ST2_LIGHT),
        (55.0, ToneGroup.ST2_LIGHT),
        (55.0 + 1e-9, ToneGroup.ST1_VERY_LIGHT),
        (5.0, ToneGroup.OUT_OF_RANGE),
        (-20.0, ToneGroup.OUT_OF_RANGE),
    ]
    for angle, expected in cases:
        assert classify(angle) is expected


def test_classify_monotone_step():
    prev_rank = None
    ranks = {
        ToneGroup.OUT_OF_RANGE: None,
        ToneGroup.ST4_TAN: 0,
        ToneGroup.ST3_INTERMEDIATE: 1,
        ToneGroup.ST2_LIGHT: 2,
        ToneGroup.ST1_VERY_LIGHT: 3,
    }
    for angle in np.linspace(10.01, 90.0, 300):
        rank = ranks[classify(float(angle))]
        if prev_rank is not None:
            assert rank >= prev_rank
        prev_rank = rank


def test_ita_monotone_in_lightness():
    angles = [ita(LabColor(L, 0, 15)) for L in (40, 50, 60, 70, 80)]
    assert all(a < b for a, b in zip(angles, angles[1:]))


def test_dominant_color_uniform():
    pts = np.tile([[60.0, 5.0, 20.0]], (50, 1))
    c = dominant_color(pts, seed=0)
    assert (c.L, c.a, c.b) == pytest.approx((60.0, 5.0, 20.0))


def test_dominant_color_majority_cluster():
    rng = np.random.default_rng(1)
    major = rng.normal([65, 8, 18], 0.5, (90, 3))
    minor = rng.normal([20, 30, -40], 0.5, (10, 3))
    pts = np.vstack([major, minor])
    c = dominant_color(pts, seed=0)
    assert c.L == pytest.approx(65, abs=1.0)
    assert c.b == pytest.approx(18, abs=1.0)


def test_dominant_color_deterministic_and_permutation_invariant():
    rng = np.random.default_rng(2)
    pts = rng.normal([60, 10, 20], 3.0, (80, 3))
    a = dominant_color(pts, seed=5)
    b = dominant_color(pts[::-1], seed=5)
    assert (a.L, a.a, a.b) == (b.L, b.a, b.b)


def test_dominant_color_too_few():
    with pytest.raises(TooFewPixelsError):
        dominant_color(np.zeros((3, 3)), seed=0)
