"""Linear age regressors trained by minibatch SGD on the mean absolute error."""

from __future__ import annotations

import numba
import numpy as np

from ..errors import DivergenceError, InsufficientDataError, ShapeError, UnsupportedDegreeError
from .params import FeatureVector, ModelParams, as_matrix, split_training_set
from .schedules import TrainConfig, schedule_value


def polynomial_names(names: list[str]) -> list[str]:
    out = list(names)
    for i, a in enumerate(names):
        for b in names[i:]:
            out.append(f"{a}^2" if a == b else f"{a} {b}")
    return out


def expand_polynomial(features, degree: int = 2):
    """All monomials up to degree 2: originals, then x_i * x_j for i <= j.

    Returns a FeatureVector when given one, otherwise a 2-D array with one
    expanded row per input row.
    """
    if degree != 2:
        raise UnsupportedDegreeError(f"only degree 2 is supported, got {degree}")
    X = as_matrix(features)
    d = X.shape[1]
    iu, ju = np.triu_indices(d)
    expanded = np.hstack([X, X[:, iu] * X[:, ju]])
    if isinstance(features, FeatureVector):
        return FeatureVector(expanded[0], polynomial_names(features.feature_names))
    return expanded


def epoch_permutation(n: int, seed: int, epoch: int) -> np.ndarray:
    """Shuffled sample order for one epoch, a pure function of (seed, epoch)."""
    return np.random.default_rng([int(seed), int(epoch)]).permutation(n)


@numba.njit(cache=True)
def _sgd_mae_epoch(X, y, w, b, order, batch_size, lr, l2):
    n, d = X.shape
    w = w.copy()
    grad = np.zeros(d)
    abs_err = 0.0
    step = 0
    for start in range(0, n, batch_size):
        stop = min(start + batch_size, n)
        m = stop - start
        grad[:] = 0.0
        grad_b = 0.0
        for k in range(start, stop):
            i = order[k]
            r = b - y[i]
            for j in range(d):
                r += X[i, j] * w[j]
            abs_err += abs(r)
            if r > 0.0:
                s = 1.0
            elif r < 0.0:
                s = -1.0
            else:
                s = 0.0
            grad_b += s
            for j in range(d):
                grad[j] += s * X[i, j]
        shrink = 1.0 + 2.0 * lr * l2
        ok = np.isfinite(abs_err)
        for j in range(d):
            w[j] = (w[j] - lr * grad[j] / m) / shrink
            if not np.isfinite(w[j]):
                ok = False
        b = b - lr * grad_b / m
        if not ok or not np.isfinite(b):
            return w, b, abs_err / n, step
        step += 1
    return w, b, abs_err / n, -1


def run_linear_epoch(X, y, params: ModelParams, lr: float, cfg: TrainConfig, seed: int, epoch: int):
    """One pass over (X, y) starting from ``params``.

    Returns the updated parameters and the mean absolute training error seen
    during the pass. Shared by centralized training and federated clients so
    that the two paths are bitwise interchangeable.
    """
    if X.shape[1] != params.weights.size:
        raise ShapeError(f"{X.shape[1]} features for {params.weights.size} weights")
    order = epoch_permutation(X.shape[0], seed, epoch)
    w, b, loss, bad = _sgd_mae_epoch(
        X, y, params.weights, params.intercept, order, cfg.batch_size, float(lr), float(cfg.l2_penalty)
    )
    if bad >= 0:
        raise DivergenceError(
            f"epoch {epoch} batch {bad + 1}",
            f"non-finite loss encountered at epoch {epoch}, batch {bad + 1}",
        )
    return ModelParams(w, b), float(loss)


def fit_linear_sgd(train, cfg: TrainConfig, return_history: bool = False):
    """Fit ``weights . x + intercept`` minimising mean |error| + l2 * ||weights||^2.

    Weights start at zero and the intercept at ``cfg.intercept_init``. The
    learning rate advances once per epoch. The penalty is applied as an
    implicit (proximal) shrinkage after each gradient step so that large
    penalties cannot blow up the update.
    """
    X, y = split_training_set(train)
    if X.shape[0] == 0:
        raise InsufficientDataError("empty training set")
    if np.any(y <= 0):
        raise ValueError("ages must be positive")
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite feature values")
    params = ModelParams(np.zeros(X.shape[1]), cfg.intercept_init)
    history = []
    for epoch in range(1, cfg.epochs + 1):
        lr = schedule_value(cfg.schedule, epoch)
        params, loss = run_linear_epoch(X, y, params, lr, cfg, cfg.seed, epoch)
        history.append(loss)
    if return_history:
        return params, history
    return params


def predict(params: ModelParams, features):
    """Predicted age(s). A single FeatureVector or 1-D input returns a float."""
    single = isinstance(features, FeatureVector) or np.ndim(features) == 1
    X = as_matrix(features)
    if X.shape[1] != params.input_dim:
        raise ShapeError(f"{X.shape[1]} features for a model expecting {params.input_dim}")
    if params.is_linear:
        out = X @ params.weights + params.intercept
    else:
        from .feedforward import forward

        out = forward(params, X)
    return float(out[0]) if single else out


def mean_absolute_error(params: ModelParams, X, y) -> float:
    return float(np.mean(np.abs(predict(params, as_matrix(X)) - np.asarray(y))))
