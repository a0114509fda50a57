import math

import numpy as np
import pytest
import scipy.stats

from segbias.errors import ExpectedZeroError, NoErrorsError
from segbias.stats import (
    Chi2Result,
    ErrorContingency,
    chi_square,
    haldane_epsilon,
    relative_risk,
    symmetry_score,
)


def test_chi_square_identical_rows():
    t = ErrorContingency(clean_row=(10, 10, 80), biased_row=(10, 10, 80))
    res = chi_square(t)
    assert res.chi2 == pytest.approx(0.0)
    assert res.p_value == pytest.approx(1.0)
    assert not res.significant


def test_chi_square_matches_reference_routine():
    t = ErrorContingency(clean_row=(10, 10, 80), biased_row=(30, 10, 60))
    res = chi_square(t)
    ref_chi2, ref_p, ref_df, _ = scipy.stats.chi2_contingency(t.table, correction=False)
    assert res.chi2 == pytest.approx(ref_chi2, abs=1e-9)
    assert res.df == ref_df == 2
    assert res.p_value == pytest.approx(ref_p, rel=1e-9)
    # closed form for two degrees of freedom
    assert res.p_value == pytest.approx(math.exp(-res.chi2 / 2.0))


def test_chi_square_scales_linearly():
    small = ErrorContingency(clean_row=(10, 10, 80), biased_row=(30, 10, 60))
    big = ErrorContingency(clean_row=(100, 100, 800), biased_row=(300, 100, 600))
    a, b = chi_square(small), chi_square(big)
    assert b.chi2 == pytest.approx(10 * a.chi2, rel=1e-12)
    assert b.p_value == pytest.approx(math.exp(-b.chi2 / 2.0))


def test_chi_square_expected_zero():
    with pytest.raises(ExpectedZeroError):
        chi_square(ErrorContingency(clean_row=(0, 10, 80), biased_row=(0, 10, 60)))


def test_chi_square_calibration_under_null():
    """Group-independent flips should reject at the nominal rate."""
    rng = np.random.default_rng(123)
    n_trials = 200
    n_pix = 100_000
    p = np.array([0.01, 0.012, 0.978])
    rejections = 0
    for _ in range(n_trials):
        clean = rng.multinomial(n_pix, p)
        biased = rng.multinomial(n_pix, p)
        res = chi_square(ErrorContingency(clean_row=tuple(clean), biased_row=tuple(biased)))
        rejections += res.significant
    rate = rejections / n_trials
    assert 0.02 <= rate <= 0.08


def test_relative_risk_parity_and_direction():
    assert relative_risk(0.05, 0.05, 1e-9) == pytest.approx(0.0)
    assert relative_risk(0.0, 0.0, 0.01) == pytest.approx(0.0)
    # worked example: omission rates 5.66% vs 1.09% give log risk ~1.65
    assert relative_risk(0.0566, 0.0109, 1e-12) == pytest.approx(1.647, abs=2e-3)
    assert relative_risk(0.01, 0.02, 1e-12) < 0


def test_haldane_epsilon():
    assert haldane_epsilon(100, 200) == pytest.approx(1 / 200)


def test_symmetry_score_proportional():
    s = symmetry_score(10, 10, 7, 7, 1000, 1000)
    assert s.s_omission == pytest.approx(1.0)
    assert s.s_commission == pytest.approx(1.0)
    assert s.s == pytest.approx(1.0)


def test_symmetry_score_fully_asymmetric():
    s = symmetry_score(20, 0, 5, 5, 1000, 1000)
    assert s.s_omission == pytest.approx(0.0)
    assert s.s_commission == pytest.approx(1.0)
    assert s.s == pytest.approx(0.0)


def test_symmetry_score_partial():
    # omission share 0.75 against pixel share 0.5
    s = symmetry_score(30, 10, 5, 5, 1000, 1000)
    assert s.s_omission == pytest.approx(0.5)
    assert s.s == pytest.approx(0.5)


def test_symmetry_score_bounds():
    rng = np.random.default_rng(0)
    for _ in range(200):
        vals = rng.integers(0, 50, size=4)
        if vals[:2].sum() == 0 and vals[2:].sum() == 0:
            continue
        s = symmetry_score(*vals, 500, 700)
        for comp in (s.s_omission, s.s_commission):
            if comp is not None:
                assert comp <= 1.0 + 1e-12


def test_symmetry_undefined_cases():
    with pytest.raises(NoErrorsError):
        symmetry_score(0, 0, 0, 0, 100, 100)
    s = symmetry_score(0, 0, 3, 1, 100, 100)
    assert s.s_omission is None
    assert s.s is not None


def test_p_monotone_in_chi2():
    values = [Chi2Result(chi2=c, df=2, p_value=math.exp(-c / 2)) for c in (0.5, 1, 5, 10)]
    ps = [v.p_value for v in values]
    assert all(a > b for a, b in zip(ps, ps[1:]))
