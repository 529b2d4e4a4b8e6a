import math

import numpy as np
import pytest

from fedbrainage.stats import logistic_fit, odds_ratio_table
from fedbrainage.stats.logistic import (
    LogisticFit,
    SeparationWarning,
    significance_stars,
    standardize_design,
    wald_ci_contains_point,
)
from oracles import log_odds_ratio


def _two_by_two(a, b, c, d):
    # x=1: a events, b non-events; x=0: c events, d non-events
    x = np.array([1] * (a + b) + [0] * (c + d), dtype=float)
    y = np.array([1] * a + [0] * b + [1] * c + [0] * d, dtype=float)
    return np.column_stack([np.ones_like(x), x]), y


@pytest.mark.parametrize("counts", [(12, 5, 7, 14), (3, 40, 9, 11), (50, 50, 50, 50)])
def test_saturated_two_by_two(counts):
    X, y = _two_by_two(*counts)
    fit = logistic_fit(X, y, ["intercept", "x"])
    assert fit.converged
    assert fit.coef("x") == pytest.approx(log_odds_ratio(*counts), abs=1e-6)
    a, b, c, d = counts
    # closed-form standard error of a log odds ratio
    assert fit.std_errors[1] == pytest.approx(math.sqrt(1 / a + 1 / b + 1 / c + 1 / d), rel=1e-6)


def test_null_predictor():
    rng = np.random.default_rng(0)
    x = np.repeat([0.0, 1.0], 500)
    y = (rng.random(1000) < 0.4).astype(float)
    fit = logistic_fit(np.column_stack([np.ones(1000), x]), y)
    assert abs(fit.coefficients[1]) < 3 * fit.std_errors[1]
    assert fit.ci_lower[1] < 1 < fit.ci_upper[1]


def test_planted_coefficient():
    rng = np.random.default_rng(1)
    x = rng.normal(size=5000)
    y = (rng.random(5000) < 1 / (1 + np.exp(-0.5 * x))).astype(float)
    fit = logistic_fit(np.column_stack([np.ones(5000), x]), y)
    assert abs(fit.coefficients[1] - 0.5) < 3 * fit.std_errors[1]


def test_loglik_monotone():
    rng = np.random.default_rng(2)
    X = np.column_stack([np.ones(300), rng.normal(size=(300, 3))])
    y = (rng.random(300) < 1 / (1 + np.exp(-(X @ [0.2, 1.0, -2.0, 0.5])))).astype(float)
    hist = logistic_fit(X, y).loglik_history
    assert all(b >= a - 1e-12 for a, b in zip(hist, hist[1:]))


def test_separation_flagged():
    x = np.arange(20.0)
    y = (x >= 10).astype(float)
    with pytest.warns(SeparationWarning):
        fit = logistic_fit(np.column_stack([np.ones(20), x]), y)
    assert fit.separation and fit.warnings


def _manual_fit(coef, se):
    coef, se = np.array([0.0, coef]), np.array([0.1, se])
    z = coef / se
    p = np.array([math.erfc(abs(v) / math.sqrt(2)) for v in z])
    return LogisticFit(
        ["intercept", "x"], coef, se, z, p, np.exp(coef),
        np.exp(coef - 1.96 * se), np.exp(coef + 1.96 * se), True, 3, [-1.0],
    )


def test_or_table_zero_coefficient():
    (row,) = odds_ratio_table(_manual_fit(0.0, 0.3))
    assert row["odds_ratio"] == 1.0 and row["ci_lower"] < 1 < row["ci_upper"]
    assert row["stars"] == ""


def test_or_table_ln2():
    (row,) = odds_ratio_table(_manual_fit(math.log(2), 0.1))
    assert row["odds_ratio"] == pytest.approx(2.0, abs=1e-15)
    assert row["ci_lower"] > 1 and row["stars"] == "***"


def test_wald_ci_brackets_or():
    X, y = _two_by_two(12, 5, 7, 14)
    assert wald_ci_contains_point(logistic_fit(X, y))


@pytest.mark.parametrize("p,stars", [(0.2, ""), (0.049, "*"), (0.0099, "**"), (0.0009, "***"), (0.05, "")])
def test_stars(p, stars):
    assert significance_stars(p) == stars


def test_standardized_table_rescales_continuous():
    rng = np.random.default_rng(3)
    age = rng.normal(70, 15, 800)
    sex = (rng.random(800) < 0.5).astype(float)
    y = (rng.random(800) < 1 / (1 + np.exp(-(0.05 * (age - 70) + 0.3 * sex)))).astype(float)
    X = np.column_stack([np.ones(800), age, sex])
    fit = logistic_fit(X, y, ["intercept", "age", "sex"])
    raw = {r["predictor"]: r for r in odds_ratio_table(fit)}
    std = {r["predictor"]: r for r in odds_ratio_table(fit, standardize=True)}
    assert "intercept" not in raw
    assert math.log(std["age"]["odds_ratio"]) == pytest.approx(math.log(raw["age"]["odds_ratio"]) * age.std(ddof=1), rel=1e-6)
    assert std["sex"]["odds_ratio"] == pytest.approx(raw["sex"]["odds_ratio"], rel=1e-9)
    np.testing.assert_array_equal(standardize_design(X, fit.names)[:, 2], sex)
