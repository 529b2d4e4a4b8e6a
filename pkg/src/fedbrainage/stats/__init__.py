"""Statistical battery: rank tests, chi-squared tests and logistic regression."""

from .distributions import chi2_sf, normal_sf, two_sided_normal_p
from .logistic import LogisticFit, SeparationWarning, logistic_fit, odds_ratio_table, significance_stars, standardize_design
from .nonparametric import (
    StatResult,
    chi2_contingency,
    chi2_yates,
    kruskal_wallis,
    mann_whitney_u,
    wilcoxon_signed_rank,
)

__all__ = [
    "LogisticFit",
    "SeparationWarning",
    "StatResult",
    "chi2_contingency",
    "chi2_sf",
    "chi2_yates",
    "kruskal_wallis",
    "logistic_fit",
    "mann_whitney_u",
    "normal_sf",
    "odds_ratio_table",
    "significance_stars",
    "standardize_design",
    "two_sided_normal_p",
    "wilcoxon_signed_rank",
]
