"""Error comparisons, phenotype comparisons and outcome models on BrainAGE."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from ..cohort import PHENOTYPES
from ..errors import DegenerateTestError, NonConvergenceError, PairingError
from ..stats import StatResult, logistic_fit, mann_whitney_u, odds_ratio_table, wilcoxon_signed_rank
from ..stats.logistic import LogisticFit
from .experiment import CONFIGURATIONS

OUTCOME_PREDICTORS = ("brainage", "age", "sex", "htn", "dm", "af", "smk", "hcl", "nihss", "p2p", "ivt", "reca")
GOOD_OUTCOME_MAX_MRS = 2


def is_good_outcome(mrs_3m: int) -> bool:
    return mrs_3m <= GOOD_OUTCOME_MAX_MRS


def absolute_errors(records) -> dict[int, float]:
    return {r.subject_id: abs(r.predicted_age - r.actual_age) for r in records}


def paired_error_test(records_a, records_b) -> StatResult:
    """Wilcoxon signed-rank on per-subject |error| differences (a minus b)."""
    ea, eb = absolute_errors(records_a), absolute_errors(records_b)
    if set(ea) != set(eb):
        raise PairingError(f"subject sets differ ({len(set(ea) ^ set(eb))} unmatched subjects)")
    ids = sorted(ea)
    diffs = np.array([ea[i] - eb[i] for i in ids])
    try:
        return wilcoxon_signed_rank(diffs)
    except DegenerateTestError:
        return StatResult(0.0, 1.0, "wilcoxon_signed_rank", (0,), "none", extra={"note": "no difference"})


def error_summary(records) -> tuple[float, float]:
    errs = np.array(list(absolute_errors(records).values()))
    return float(errs.mean()), float(errs.std(ddof=1)) if errs.size > 1 else 0.0


def compare_errors(records_by_config: dict) -> tuple[dict, dict]:
    """Pairwise Wilcoxon tests between configurations plus mean/sd of |error|.

    Returns ({(config_a, config_b): StatResult}, {config: (mean, sd)}).
    """
    configs = [c for c in CONFIGURATIONS if c in records_by_config]
    configs += [c for c in records_by_config if c not in configs]
    summary = {c: error_summary(records_by_config[c]) for c in configs}
    tests = {}
    for a, b in itertools.combinations(configs, 2):
        tests[(a, b)] = paired_error_test(records_by_config[a], records_by_config[b])
    return tests, summary


def _subject_index(cohort):
    return {r.subject_id: r for r in cohort}


def phenotype_analysis(records, cohort) -> list[dict]:
    """Mann-Whitney of BrainAGE (and of age) between carriers and non-carriers.

    Phenotypes with an empty group yield a row with status "skipped".
    """
    index = _subject_index(cohort)
    subjects = [index[r.subject_id] for r in records]
    brainage = np.array([r.brainage for r in records])
    if np.any(np.isnan(brainage)):
        raise ValueError("BrainAGE must be filled before phenotype analysis")
    ages = np.array([s.age for s in subjects])
    rows = []
    for name in PHENOTYPES:
        flag = np.array([getattr(s, name) for s in subjects]) == 1
        for variable, values in (("brainage", brainage), ("age", ages)):
            row = {"phenotype": name, "variable": variable, "n_yes": int(flag.sum()), "n_no": int((~flag).sum())}
            if flag.all() or not flag.any():
                row.update(mean_yes=math.nan, mean_no=math.nan, statistic=math.nan, p_value=math.nan, effect="", status="skipped")
            else:
                res = mann_whitney_u(values[flag], values[~flag])
                row.update(
                    mean_yes=float(values[flag].mean()),
                    mean_no=float(values[~flag].mean()),
                    statistic=res.statistic,
                    p_value=res.p_value,
                    effect="higher" if res.effect == "a>b" else "lower" if res.effect == "a<b" else "none",
                    status="ok",
                )
            rows.append(row)
    return rows


@dataclass
class OutcomeAnalysis:
    mann_whitney: StatResult
    fit: LogisticFit
    odds_ratios: list[dict]
    standardized_odds_ratios: list[dict]
    mean_brainage_good: float
    mean_brainage_poor: float


def outcome_design(records, cohort) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Design matrix (intercept first) and good-outcome indicator."""
    index = _subject_index(cohort)
    rows = []
    y = []
    for r in records:
        s = index[r.subject_id]
        values = {"brainage": r.brainage, **{k: getattr(s, k) for k in OUTCOME_PREDICTORS if k != "brainage"}}
        rows.append([1.0] + [float(values[k]) for k in OUTCOME_PREDICTORS])
        y.append(1.0 if is_good_outcome(s.mrs_3m) else 0.0)
    return np.array(rows), np.array(y), ["intercept", *OUTCOME_PREDICTORS]


def outcome_analysis(records, cohort) -> OutcomeAnalysis:
    """BrainAGE by good/poor outcome (mRS at 3 months <= 2 is good) and the
    multivariable logistic regression of good outcome."""
    X, y, names = outcome_design(records, cohort)
    brainage = X[:, 1]
    if np.any(np.isnan(brainage)):
        raise ValueError("BrainAGE must be filled before outcome analysis")
    good = y == 1
    mw = mann_whitney_u(brainage[good], brainage[~good])
    try:
        fit = logistic_fit(X, y, names)
    except NonConvergenceError:
        raise
    return OutcomeAnalysis(
        mann_whitney=mw,
        fit=fit,
        odds_ratios=odds_ratio_table(fit),
        standardized_odds_ratios=odds_ratio_table(fit, standardize=True),
        mean_brainage_good=float(brainage[good].mean()) if good.any() else math.nan,
        mean_brainage_poor=float(brainage[~good].mean()) if (~good).any() else math.nan,
    )
