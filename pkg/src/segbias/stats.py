"""Statistics that separate systematic label bias from uniform noise.

Three complementary views of the audit's per-group error counts: a
chi-square independence test over a groups-by-error-type contingency
table, smoothed log relative risk of each error type, and a symmetry
score comparing each group's error share to its pixel share.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ExpectedZeroError, NoErrorsError

__all__ = [
    "ErrorContingency",
    "Chi2Result",
    "SymmetryScore",
    "BiasIndicators",
    "chi_square",
    "haldane_epsilon",
    "relative_risk",
    "symmetry_score",
    "bias_indicators",
]

SIGNIFICANCE_LEVEL = 0.05


@dataclass(frozen=True)
class ErrorContingency:
    """Rows: (clean group, biased group); columns: omission, commission, correct."""

    clean_row: tuple  # (n_omission, n_commission, n_correct)
    biased_row: tuple

    @property
    def table(self) -> np.ndarray:
        return np.array([self.clean_row, self.biased_row], dtype=np.float64)

    @property
    def n_clean(self) -> int:
        return int(sum(self.clean_row))

    @property
    def n_biased(self) -> int:
        return int(sum(self.biased_row))


@dataclass(frozen=True)
class Chi2Result:
    chi2: float
    df: int
    p_value: float

    @property
    def significant(self) -> bool:
        return self.p_value < SIGNIFICANCE_LEVEL


def chi_square(table: ErrorContingency) -> Chi2Result:
    """Pearson chi-square for independence of error type and group.

    Expected counts come from the row/column marginals; with a 2x3 table
    the statistic has 2 degrees of freedom, whose survival function has
    the closed form exp(-x/2).
    """
    obs = table.table
    total = obs.sum()
    expected = np.outer(obs.sum(axis=1), obs.sum(axis=0)) / total
    if np.any(expected == 0):
        raise ExpectedZeroError("contingency table has an expected cell count of zero")
    chi2 = float(((obs - expected) ** 2 / expected).sum())
    return Chi2Result(chi2=chi2, df=2, p_value=math.exp(-chi2 / 2.0))


def haldane_epsilon(n_clean: int, n_biased: int) -> float:
    """Rate-scale smoothing constant: half a count of the smaller group."""
    return 1.0 / (2.0 * min(n_clean, n_biased))


def relative_risk(rate_biased: float, rate_clean: float, epsilon: float) -> float:
    """Smoothed log ratio of the biased group's rate to the clean group's.

    Zero means parity; positive means elevated risk for the biased group.
    """
    if rate_biased < 0 or rate_clean < 0:
        raise ValueError("rates must be >= 0")
    return math.log((rate_biased + epsilon) / (rate_clean + epsilon))


@dataclass(frozen=True)
class SymmetryScore:
    s_omission: float | None
    s_commission: float | None

    @property
    def s(self) -> float | None:
        defined = [v for v in (self.s_omission, self.s_commission) if v is not None]
        return min(defined) if defined else None


def symmetry_score(n_om_biased, n_om_clean, n_co_biased, n_co_clean, n_pix_biased, n_pix_clean) -> SymmetryScore:
    """One minus twice the gap between error share and pixel share, per error type.

    Values near 1 mean errors are spread in proportion to group size
    (consistent with uniform noise); small values mean one group carries a
    disproportionate share. Undefined (None) for an error type with zero
    total count; raises NoErrorsError when both types have zero counts.
    """
    pix_share = n_pix_biased / (n_pix_biased + n_pix_clean)

    def component(n_b, n_c):
        total = n_b + n_c
        if total == 0:
            return None
        return 1.0 - 2.0 * abs(n_b / total - pix_share)

    s_om = component(n_om_biased, n_om_clean)
    s_co = component(n_co_biased, n_co_clean)
    if s_om is None and s_co is None:
        raise NoErrorsError("no errors of either type; symmetry is undefined")
    return SymmetryScore(s_omission=s_om, s_commission=s_co)


@dataclass
class BiasIndicators:
    chi2: float
    df: int
    p_value: float
    significant: bool
    rr_omission: float
    rr_commission: float
    s_omission: float | None
    s_commission: float | None
    s: float | None

    def to_dict(self):
        return {
            "chi2": self.chi2,
            "df": self.df,
            "p_value": self.p_value,
            "significant_at_0.05": self.significant,
            "rr_omission": self.rr_omission,
            "rr_commission": self.rr_commission,
            "s_omission": self.s_omission,
            "s_commission": self.s_commission,
            "s": self.s,
        }


def bias_indicators(joints: dict, clean_group: int) -> BiasIndicators:
    """Assemble all indicators from per-group joint distributions."""
    biased_group = 1 - clean_group
    jc = joints[clean_group]
    jb = joints[biased_group]

    def row(jd):
        c = jd.counts
        n_om, n_co = int(c[0, 1]), int(c[1, 0])
        return (n_om, n_co, jd.n_pixels - n_om - n_co)

    table = ErrorContingency(clean_row=row(jc), biased_row=row(jb))
    chi = chi_square(table)
    eps = haldane_epsilon(jc.n_pixels, jb.n_pixels)
    om_b, co_b = table.biased_row[0] / jb.n_pixels, table.biased_row[1] / jb.n_pixels
    om_c, co_c = table.clean_row[0] / jc.n_pixels, table.clean_row[1] / jc.n_pixels
    rr_om = relative_risk(om_b, om_c, eps)
    rr_co = relative_risk(co_b, co_c, eps)
    try:
        sym = symmetry_score(
            table.biased_row[0], table.clean_row[0],
            table.biased_row[1], table.clean_row[1],
            jb.n_pixels, jc.n_pixels,
        )
        s_om, s_co, s = sym.s_omission, sym.s_commission, sym.s
    except NoErrorsError:
        s_om = s_co = s = None
    return BiasIndicators(
        chi2=chi.chi2,
        df=chi.df,
        p_value=chi.p_value,
        significant=chi.significant,
        rr_omission=rr_om,
        rr_commission=rr_co,
        s_omission=s_om,
        s_commission=s_co,
        s=s,
    )
