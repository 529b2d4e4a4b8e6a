"""Tail probabilities for the reference distributions used by the tests."""

import math

from scipy.special import gammaincc


def normal_sf(z: float) -> float:
    """P(Z > z) for a standard normal."""
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def two_sided_normal_p(z: float) -> float:
    return min(1.0, 2.0 * normal_sf(abs(z)))


def chi2_sf(x: float, df: int) -> float:
    """Upper tail of chi-squared via the regularized upper incomplete gamma Q(df/2, x/2)."""
    if df <= 0:
        raise ValueError("df must be positive")
    if x <= 0:
        return 1.0
    return float(gammaincc(df / 2.0, x / 2.0))
