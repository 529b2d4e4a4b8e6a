"""Rank tests and contingency-table chi-squared tests.

Two-sided p-values throughout. Exact null distributions are obtained by
counting sign patterns / rank subsets with a dynamic program over integer
rank sums, which is the same enumeration done without listing every case.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import rankdata

from ..errors import DegenerateTableError, DegenerateTestError
from .distributions import chi2_sf, two_sided_normal_p

WILCOXON_EXACT_MAX_N = 25
MANN_WHITNEY_EXACT_MAX_N = 8
CONTINUITY = 0.5


@dataclass
class StatResult:
    statistic: float
    p_value: float
    method: str
    n: tuple
    effect: str = "none"
    exact: bool = False
    z: Optional[float] = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.p_value = float(min(1.0, max(0.0, self.p_value)))
        self.statistic = float(self.statistic)

    def as_row(self) -> dict:
        return {
            "method": self.method,
            "n": "/".join(str(v) for v in self.n),
            "statistic": self.statistic,
            "p_value": self.p_value,
            "effect": self.effect,
            "exact": int(self.exact),
        }


def _tie_term(values) -> float:
    _, counts = np.unique(values, return_counts=True)
    return float(np.sum(counts.astype(float) ** 3 - counts))


def _two_sided_from_counts(counts: np.ndarray, observed: int) -> float:
    total = counts.sum()
    lower = counts[: observed + 1].sum() / total
    upper = counts[observed:].sum() / total
    return min(1.0, 2.0 * min(lower, upper))


def signed_rank_null_counts(doubled_ranks) -> np.ndarray:
    """Number of sign patterns giving each value of 2 * W+."""
    total = int(sum(doubled_ranks))
    counts = np.zeros(total + 1)
    counts[0] = 1.0
    for r in doubled_ranks:
        r = int(r)
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: total + 1 - r]
        counts = counts + shifted
    return counts


def wilcoxon_signed_rank(paired_diffs) -> StatResult:
    """Two-sided Wilcoxon signed-rank test on paired differences.

    Zero differences are dropped first and ``n`` counts what remains.
    Exact for n <= 25 (ties allowed; average ranks), otherwise the normal
    approximation with tie and continuity corrections. The statistic is
    min(W+, W-).
    """
    d = np.asarray(paired_diffs, dtype=np.float64).ravel()
    d = d[d != 0]
    n = d.size
    if n == 0:
        raise DegenerateTestError("all paired differences are zero")
    ranks = rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    effect = "positive" if w_plus > w_minus else "negative" if w_minus > w_plus else "none"
    stat = min(w_plus, w_minus)
    if n <= WILCOXON_EXACT_MAX_N:
        doubled = np.rint(2 * ranks).astype(int)
        counts = signed_rank_null_counts(doubled)
        p = _two_sided_from_counts(counts, int(round(2 * w_plus)))
        return StatResult(stat, p, "wilcoxon_signed_rank", (n,), effect, exact=True, extra={"w_plus": w_plus})
    mean = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0 - _tie_term(np.abs(d)) / 48.0
    z = max(0.0, abs(w_plus - mean) - CONTINUITY) / math.sqrt(var) if var > 0 else 0.0
    return StatResult(stat, two_sided_normal_p(z), "wilcoxon_signed_rank", (n,), effect, z=z, extra={"w_plus": w_plus})


def rank_sum_null_counts(m: int, N: int) -> np.ndarray:
    """Number of m-subsets of ranks 1..N with each rank sum (index = sum)."""
    max_sum = m * N
    counts = np.zeros((m + 1, max_sum + 1))
    counts[0, 0] = 1.0
    for rank in range(1, N + 1):
        top = min(m, rank)
        for j in range(top, 0, -1):
            counts[j, rank:] += counts[j - 1, : max_sum + 1 - rank]
    return counts[m]


def mann_whitney_u(group_a, group_b) -> StatResult:
    """Two-sided Mann-Whitney U test; the statistic is U for ``group_a``.

    Exact when the smaller group has at most 8 members and there are no
    ties, otherwise the tie-corrected normal approximation.
    """
    a = np.asarray(group_a, dtype=np.float64).ravel()
    b = np.asarray(group_b, dtype=np.float64).ravel()
    na, nb = a.size, b.size
    if na == 0 or nb == 0:
        raise DegenerateTestError("both groups must be non-empty")
    pooled = np.concatenate([a, b])
    ranks = rankdata(pooled)
    u_a = float(ranks[:na].sum() - na * (na + 1) / 2.0)
    mean = na * nb / 2.0
    effect = "a>b" if u_a > mean else "a<b" if u_a < mean else "none"
    N = na + nb
    tie = _tie_term(pooled)
    if min(na, nb) <= MANN_WHITNEY_EXACT_MAX_N and tie == 0:
        m = min(na, nb)
        u_small = u_a if na <= nb else na * nb - u_a
        # rank sum of the small group = U + m(m+1)/2
        counts = rank_sum_null_counts(m, N)[m * (m + 1) // 2 :]
        p = _two_sided_from_counts(counts, int(round(u_small)))
        return StatResult(u_a, p, "mann_whitney_u", (na, nb), effect, exact=True)
    var = na * nb / 12.0 * ((N + 1) - tie / (N * (N - 1)))
    if var <= 0:
        return StatResult(u_a, 1.0, "mann_whitney_u", (na, nb), effect, z=0.0)
    z = max(0.0, abs(u_a - mean) - CONTINUITY) / math.sqrt(var)
    return StatResult(u_a, two_sided_normal_p(z), "mann_whitney_u", (na, nb), effect, z=z)


def kruskal_wallis(groups) -> StatResult:
    """Tie-corrected Kruskal-Wallis H with a chi-squared(g - 1) p-value."""
    groups = [np.asarray(g, dtype=np.float64).ravel() for g in groups]
    if len(groups) < 2:
        raise ValueError("need at least two groups")
    if any(g.size == 0 for g in groups):
        raise ValueError("every group must be non-empty")
    sizes = [g.size for g in groups]
    pooled = np.concatenate(groups)
    N = pooled.size
    tie_factor = 1.0 - _tie_term(pooled) / (N**3 - N) if N > 1 else 0.0
    df = len(groups) - 1
    if tie_factor <= 0:
        return StatResult(0.0, 1.0, "kruskal_wallis", tuple(sizes), extra={"df": df})
    ranks = rankdata(pooled)
    bounds = np.cumsum([0] + sizes)
    ssum = sum(ranks[lo:hi].sum() ** 2 / (hi - lo) for lo, hi in zip(bounds[:-1], bounds[1:]))
    h = (12.0 / (N * (N + 1)) * ssum - 3.0 * (N + 1)) / tie_factor
    h = max(h, 0.0)
    return StatResult(h, chi2_sf(h, df), "kruskal_wallis", tuple(sizes), extra={"df": df})


def _expected(table: np.ndarray) -> np.ndarray:
    rows = table.sum(axis=1)
    cols = table.sum(axis=0)
    if np.any(rows <= 0) or np.any(cols <= 0):
        raise DegenerateTableError("every row and column margin must be positive")
    return np.outer(rows, cols) / table.sum()


def chi2_yates(table) -> StatResult:
    """Pearson chi-squared for a 2x2 table with Yates' continuity correction.

    statistic = sum(max(|O - E| - 0.5, 0)^2 / E), 1 degree of freedom.
    """
    t = np.asarray(table, dtype=np.float64)
    if t.shape != (2, 2):
        raise ValueError(f"expected a 2x2 table, got shape {t.shape}")
    if np.any(t < 0):
        raise ValueError("counts must be >= 0")
    e = _expected(t)
    stat = float(np.sum(np.maximum(np.abs(t - e) - 0.5, 0.0) ** 2 / e))
    odds_up = t[0, 0] * t[1, 1] > t[0, 1] * t[1, 0]
    odds_down = t[0, 0] * t[1, 1] < t[0, 1] * t[1, 0]
    effect = "positive" if odds_up else "negative" if odds_down else "none"
    return StatResult(stat, chi2_sf(stat, 1), "chi2_yates", (int(t.sum()),), effect, extra={"df": 1})


def chi2_contingency(table) -> StatResult:
    """Pearson chi-squared for an r x c table; Yates' correction when it is 2x2."""
    t = np.asarray(table, dtype=np.float64)
    if t.ndim != 2 or min(t.shape) < 2:
        raise ValueError("need at least a 2x2 table")
    if t.shape == (2, 2):
        return chi2_yates(t)
    e = _expected(t)
    stat = float(np.sum((t - e) ** 2 / e))
    df = (t.shape[0] - 1) * (t.shape[1] - 1)
    return StatResult(stat, chi2_sf(stat, df), "chi2_pearson", (int(t.sum()),), extra={"df": df})
