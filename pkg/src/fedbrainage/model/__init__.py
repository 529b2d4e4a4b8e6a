"""Age regressors, schedules and penalty tuning."""

from .feedforward import fit_feedforward, init_feedforward, loss_and_grad
from .linear import epoch_permutation, expand_polynomial, fit_linear_sgd, mean_absolute_error, predict
from .params import FeatureVector, ModelParams
from .schedules import LrSchedule, TrainConfig, schedule_value
from .tuning import DEFAULT_L2_GRID, kfold_indices, tune_l2_cv

__all__ = [
    "DEFAULT_L2_GRID",
    "FeatureVector",
    "LrSchedule",
    "ModelParams",
    "TrainConfig",
    "epoch_permutation",
    "expand_polynomial",
    "fit_feedforward",
    "fit_linear_sgd",
    "init_feedforward",
    "kfold_indices",
    "loss_and_grad",
    "mean_absolute_error",
    "predict",
    "schedule_value",
    "tune_l2_cv",
]
