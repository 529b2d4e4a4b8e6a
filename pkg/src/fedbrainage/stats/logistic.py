"""Maximum-likelihood logistic regression by IRLS with Wald inference."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..errors import NonConvergenceError
from .distributions import two_sided_normal_p

MAX_ITER = 100
TOL = 1e-8
RIDGE = 1e-8
Z95 = 1.96
SEPARATION_COEF = 15.0


class SeparationWarning(UserWarning):
    pass


@dataclass
class LogisticFit:
    names: list[str]
    coefficients: np.ndarray
    std_errors: np.ndarray
    z_values: np.ndarray
    p_values: np.ndarray
    odds_ratios: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    converged: bool
    iterations: int
    loglik_history: list[float]
    separation: bool = False
    warnings: list[str] = field(default_factory=list)
    design: Optional[np.ndarray] = field(default=None, repr=False)
    outcome: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def loglik(self) -> float:
        return self.loglik_history[-1]

    def coef(self, name: str) -> float:
        return float(self.coefficients[self.names.index(name)])

    def row(self, name: str) -> dict:
        i = self.names.index(name)
        return {
            "predictor": name,
            "coef": float(self.coefficients[i]),
            "se": float(self.std_errors[i]),
            "odds_ratio": float(self.odds_ratios[i]),
            "ci_lower": float(self.ci_lower[i]),
            "ci_upper": float(self.ci_upper[i]),
            "p_value": float(self.p_values[i]),
        }


def _loglik(X, y, beta) -> float:
    eta = X @ beta
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def logistic_fit(design, outcomes, names: Optional[Sequence[str]] = None, max_iter: int = MAX_ITER, tol: float = TOL) -> LogisticFit:
    """Fit P(y = 1) = sigmoid(design @ beta).

    ``design`` must already contain the intercept column. Each Newton step
    is halved until the log-likelihood does not decrease, so the recorded
    log-likelihood history is monotone.
    """
    X = np.asarray(design, dtype=np.float64)
    y = np.asarray(outcomes, dtype=np.float64).ravel()
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ValueError("design must be n x p with one row per outcome")
    n, p = X.shape
    if n <= p:
        raise ValueError(f"need more observations ({n}) than predictors ({p})")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("outcomes must be 0/1")
    if y.min() == y.max():
        raise ValueError("outcomes are all equal")
    names = list(names) if names is not None else [f"x{j}" for j in range(p)]
    if len(names) != p:
        raise ValueError("one name per design column is required")

    beta = np.zeros(p)
    ll = _loglik(X, y, beta)
    history = [ll]
    converged = False
    separation = False
    it = 0
    for it in range(1, max_iter + 1):
        mu = 1.0 / (1.0 + np.exp(-(X @ beta)))
        w = mu * (1.0 - mu)
        info = X.T @ (X * w[:, None]) + RIDGE * np.eye(p)
        step = np.linalg.solve(info, X.T @ (y - mu))
        scale = 1.0
        while True:
            candidate = beta + scale * step
            ll_new = _loglik(X, y, candidate)
            if ll_new >= ll or scale < 1e-10:
                break
            scale *= 0.5
        if ll_new < ll:
            ll_new, candidate = ll, beta
        gain = ll_new - ll
        beta, ll = candidate, ll_new
        history.append(ll)
        if np.max(np.abs(beta)) > SEPARATION_COEF and gain > 0:
            separation = True
        if abs(gain) < tol:
            converged = True
            break

    mu = 1.0 / (1.0 + np.exp(-(X @ beta)))
    info = X.T @ (X * (mu * (1.0 - mu))[:, None]) + RIDGE * np.eye(p)
    cov = np.linalg.inv(info)
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, beta / se, 0.0)
    pvals = np.array([two_sided_normal_p(v) for v in z])
    # separated fits can push the CI bounds to inf; that is the honest answer
    with np.errstate(over="ignore"):
        odds, lower, upper = np.exp(beta), np.exp(beta - Z95 * se), np.exp(beta + Z95 * se)
    fit = LogisticFit(
        names=names,
        coefficients=beta,
        std_errors=se,
        z_values=z,
        p_values=pvals,
        odds_ratios=odds,
        ci_lower=lower,
        ci_upper=upper,
        converged=converged,
        iterations=it,
        loglik_history=history,
        separation=separation,
        design=X,
        outcome=y,
    )
    if separation:
        msg = "possible perfect separation: coefficient magnitude exceeds 15 with rising likelihood"
        fit.warnings.append(msg)
        warnings.warn(msg, SeparationWarning, stacklevel=2)
    if not converged and not separation:
        raise NonConvergenceError(f"IRLS did not converge in {max_iter} iterations", fit)
    return fit


def significance_stars(p: float) -> str:
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return ""


def standardize_design(X: np.ndarray, names: Sequence[str]) -> np.ndarray:
    """Scale continuous columns (more than two distinct values) to unit sample variance.

    The intercept and binary columns are left unchanged.
    """
    X = np.array(X, dtype=np.float64, copy=True)
    for j, name in enumerate(names):
        col = X[:, j]
        if name == "intercept" or np.unique(col).size <= 2:
            continue
        sd = col.std(ddof=1)
        if sd > 0:
            X[:, j] = col / sd
    return X


def odds_ratio_table(fit: LogisticFit, standardize: bool = False) -> list[dict]:
    """Per-predictor OR, 95% Wald CI, p-value and significance stars (intercept omitted).

    With ``standardize`` the model is refitted after scaling continuous
    predictors to unit variance, giving ORs per standard deviation.
    """
    if not fit.converged and not fit.separation:
        raise NonConvergenceError("cannot tabulate a non-converged fit", fit)
    if standardize:
        if fit.design is None:
            raise ValueError("fit does not carry its design matrix")
        fit = logistic_fit(standardize_design(fit.design, fit.names), fit.outcome, fit.names)
    rows = []
    for name in fit.names:
        if name == "intercept":
            continue
        row = fit.row(name)
        row["stars"] = significance_stars(row["p_value"])
        row["standardized"] = int(standardize)
        rows.append(row)
    return rows


def wald_ci_contains_point(fit: LogisticFit) -> bool:
    return bool(np.all(fit.ci_lower <= fit.odds_ratios) and np.all(fit.odds_ratios <= fit.ci_upper))


def log_odds_ratio_2x2(a, b, c, d) -> float:
    return math.log(a * d / (b * c))
