from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..errors import InsufficientDataError
from .linear import fit_linear_sgd, predict
from .params import split_training_set
from .schedules import TrainConfig

DEFAULT_L2_GRID = (0.0, 1e-4, 1e-3, 1e-2, 1e-1, 1.0)


def kfold_indices(n: int, k: int, seed: int) -> list[np.ndarray]:
    """Plain seeded k-fold split of ``range(n)``; fold sizes differ by at most one."""
    order = np.random.default_rng([int(seed), 0xCF]).permutation(n)
    return [np.sort(f) for f in np.array_split(order, k)]


def cv_mae_by_penalty(train, grid: Sequence[float], k: int, base_cfg: TrainConfig, fit: Callable = fit_linear_sgd):
    X, y = split_training_set(train)
    if X.shape[0] < k:
        raise InsufficientDataError(f"{X.shape[0]} samples cannot be split into {k} folds")
    folds = kfold_indices(X.shape[0], k, base_cfg.seed)
    scores = {}
    for lam in grid:
        cfg = base_cfg.replace(l2_penalty=float(lam))
        errors = []
        for held in folds:
            mask = np.ones(X.shape[0], dtype=bool)
            mask[held] = False
            params = fit((X[mask], y[mask]), cfg)
            errors.append(np.mean(np.abs(predict(params, X[held]) - y[held])))
        scores[float(lam)] = float(np.mean(errors))
    return scores


def tune_l2_cv(train, grid: Sequence[float] = DEFAULT_L2_GRID, k: int = 5, base_cfg: TrainConfig = None, fit: Callable = fit_linear_sgd) -> float:
    """Grid value of the L2 penalty with the lowest k-fold CV mean absolute error.

    Ties go to the larger penalty.
    """
    if not len(grid):
        raise ValueError("empty L2 grid")
    if base_cfg is None:
        raise ValueError("base_cfg is required")
    if len(grid) == 1:
        X, _ = split_training_set(train)
        if X.shape[0] < k:
            raise InsufficientDataError(f"{X.shape[0]} samples cannot be split into {k} folds")
        return float(grid[0])
    scores = cv_mae_by_penalty(train, grid, k, base_cfg, fit)
    best = None
    for lam in sorted(scores, reverse=True):
        if best is None or scores[lam] < scores[best]:
            best = lam
    return best
