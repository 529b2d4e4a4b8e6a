"""Independent reference computations shared by the unit and acceptance tests."""

import itertools
import math

import numpy as np

from fedbrainage.model import ModelParams
from fedbrainage.model.feedforward import init_feedforward, loss_and_grad


def wilcoxon_enumerated_p(diffs):
    """Two-sided exact p of the signed-rank statistic by enumerating all sign patterns."""
    d = np.asarray([x for x in diffs if x != 0], dtype=float)
    ranks = _midranks(np.abs(d))
    observed = ranks[d > 0].sum()
    mean = ranks.sum() / 2
    extreme = 0
    total = 0
    for signs in itertools.product((0, 1), repeat=len(d)):
        w = ranks[np.array(signs, dtype=bool)].sum()
        total += 1
        if abs(w - mean) >= abs(observed - mean) - 1e-9:
            extreme += 1
    return extreme / total


def mann_whitney_enumerated_p(a, b):
    """Two-sided exact p of the rank-sum statistic over all assignments of ranks to group a."""
    pooled = np.concatenate([a, b]).astype(float)
    ranks = _midranks(pooled)
    n_a = len(a)
    observed = ranks[:n_a].sum()
    mean = n_a * (len(pooled) + 1) / 2
    extreme = 0
    total = 0
    for idx in itertools.combinations(range(len(pooled)), n_a):
        s = ranks[list(idx)].sum()
        total += 1
        if abs(s - mean) >= abs(observed - mean) - 1e-9:
            extreme += 1
    return extreme / total


def _midranks(values):
    values = np.asarray(values, dtype=float)
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def yates_by_hand(table):
    (a, b), (c, d) = table
    n = a + b + c + d
    rows, cols = (a + b, c + d), (a + c, b + d)
    stat = 0.0
    for i, obs_row in enumerate(table):
        for j, obs in enumerate(obs_row):
            exp = rows[i] * cols[j] / n
            stat += max(abs(obs - exp) - 0.5, 0.0) ** 2 / exp
    return stat


def log_odds_ratio(a, b, c, d):
    return math.log(a * d / (b * c))


def feedforward_gradient_check(n_points=10, eps=1e-5, input_dim=5, hidden=(6, 4), seed=0):
    """Max relative error between analytic and central-difference gradients of
    the half squared error, over ``n_points`` random parameter points."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for point in range(n_points):
        base = init_feedforward(input_dim, hidden, seed=point, intercept=0.0)
        theta = np.concatenate([base.weights + rng.normal(0, 0.3, base.weights.size), [rng.normal()]])
        X = rng.normal(size=(7, input_dim))
        y = rng.normal(size=7)

        def make(vec):
            return ModelParams(vec[:-1], float(vec[-1]), base.layer_shapes)

        _, g_w, g_b = loss_and_grad(make(theta), X, y, loss="mse")
        analytic = np.concatenate([g_w, [g_b]])
        numeric = np.empty_like(theta)
        for i in range(theta.size):
            up, down = theta.copy(), theta.copy()
            up[i] += eps
            down[i] -= eps
            numeric[i] = (loss_and_grad(make(up), X, y, "mse")[0] - loss_and_grad(make(down), X, y, "mse")[0]) / (2 * eps)
        scale = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-7)
        worst = max(worst, float(np.max(np.abs(analytic - numeric) / scale)))
    return worst
