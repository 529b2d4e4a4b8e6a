"""Predicted age difference and cross-validated age-bias correction."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFitError, InsufficientDataError


@dataclass
class PredictionRecord:
    subject_id: int
    actual_age: float
    predicted_age: float
    pad: float = float("nan")
    brainage: float = float("nan")

    def __post_init__(self):
        self.pad = compute_pad(self.predicted_age, self.actual_age)


@dataclass(frozen=True)
class BiasLine:
    slope: float
    intercept: float

    def __call__(self, age):
        return self.slope * np.asarray(age, dtype=np.float64) + self.intercept


def compute_pad(predicted: float, actual: float) -> float:
    return float(predicted) - float(actual)


def fit_bias_line(pads, ages) -> BiasLine:
    """Ordinary least squares of PAD on age, closed form."""
    pads = np.asarray(pads, dtype=np.float64)
    ages = np.asarray(ages, dtype=np.float64)
    if pads.shape != ages.shape or pads.ndim != 1:
        raise ValueError("pads and ages must be 1-D arrays of equal length")
    if pads.size < 3:
        raise InsufficientDataError(f"need at least 3 points, got {pads.size}")
    age_c = ages - ages.mean()
    sxx = float(age_c @ age_c)
    if sxx == 0.0:
        raise DegenerateFitError("ages have zero variance")
    slope = float(age_c @ (pads - pads.mean())) / sxx
    return BiasLine(slope, float(pads.mean() - slope * ages.mean()))


def correction_folds(n: int, k: int, seed: int) -> np.ndarray:
    """Fold index per record from a plain seeded shuffle (no stratification)."""
    order = np.random.default_rng([int(seed), 0xB1A5]).permutation(n)
    folds = np.empty(n, dtype=int)
    for f, idx in enumerate(np.array_split(order, k)):
        folds[idx] = f
    return folds


def correct_brainage_cv(records: list[PredictionRecord], k: int = 10, seed: int = 0) -> list[PredictionRecord]:
    """Fill ``brainage = pad - (slope * age + intercept)`` using a bias line
    fitted on the other k-1 folds. Returns new records; inputs are untouched."""
    n = len(records)
    if k < 2:
        raise ValueError("k must be >= 2")
    if n < k:
        raise InsufficientDataError(f"{n} records cannot be split into {k} folds")
    pads = np.array([r.pad for r in records])
    ages = np.array([r.actual_age for r in records])
    folds = correction_folds(n, k, seed)
    brainage = np.empty(n)
    for f in range(k):
        held = folds == f
        line = fit_bias_line(pads[~held], ages[~held])
        brainage[held] = pads[held] - line(ages[held])
    out = []
    for rec, value in zip(records, brainage):
        new = PredictionRecord(rec.subject_id, rec.actual_age, rec.predicted_age)
        new.brainage = float(value)
        out.append(new)
    return out


PREDICTION_COLUMNS = ("subject_id", "actual_age", "predicted_age", "pad", "brainage")


def write_predictions_csv(records, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PREDICTION_COLUMNS)
        for r in records:
            brainage = "" if math.isnan(r.brainage) else repr(float(r.brainage))
            writer.writerow([r.subject_id, repr(float(r.actual_age)), repr(float(r.predicted_age)), repr(float(r.pad)), brainage])


def read_predictions_csv(path) -> list[PredictionRecord]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != PREDICTION_COLUMNS:
            raise ValueError(f"{path}: expected columns {PREDICTION_COLUMNS}")
        for row in reader:
            rec = PredictionRecord(int(row["subject_id"]), float(row["actual_age"]), float(row["predicted_age"]))
            if row["brainage"]:
                rec.brainage = float(row["brainage"])
            out.append(rec)
    return out
