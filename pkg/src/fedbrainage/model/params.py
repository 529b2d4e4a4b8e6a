from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..errors import ShapeError


@dataclass
class FeatureVector:
    """Ordered, named feature values for one subject."""

    values: np.ndarray
    feature_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise ShapeError("FeatureVector values must be one-dimensional")
        if not self.feature_names:
            self.feature_names = [f"f{i:03d}" for i in range(self.values.size)]
        if len(self.feature_names) != self.values.size:
            raise ShapeError(
                f"{len(self.feature_names)} names for {self.values.size} values"
            )

    def __len__(self):
        return self.values.size


@dataclass(eq=False)
class ModelParams:
    """Flat parameter container shared by the linear and feedforward regressors.

    For the linear model ``weights`` has one entry per feature and
    ``layer_shapes`` is None. For the feedforward model ``weights`` is the
    flattened parameter vector (see ``feedforward.param_layout``) and the
    output bias lives in ``intercept``.
    """

    weights: np.ndarray
    intercept: float
    layer_shapes: Optional[tuple[tuple[int, int], ...]] = None

    def __post_init__(self):
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float64).reshape(-1)
        self.intercept = float(self.intercept)
        if self.layer_shapes is not None:
            self.layer_shapes = tuple((int(a), int(b)) for a, b in self.layer_shapes)

    @property
    def is_linear(self) -> bool:
        return self.layer_shapes is None

    @property
    def input_dim(self) -> int:
        if self.layer_shapes is None:
            return self.weights.size
        return self.layer_shapes[0][0]

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.weights)) and np.isfinite(self.intercept))

    def copy(self) -> "ModelParams":
        return ModelParams(self.weights.copy(), self.intercept, self.layer_shapes)

    def as_vector(self) -> np.ndarray:
        """Weights followed by the intercept, as used for aggregation."""
        return np.append(self.weights, self.intercept)

    @classmethod
    def from_vector(cls, vec: np.ndarray, layer_shapes=None) -> "ModelParams":
        vec = np.asarray(vec, dtype=np.float64)
        return cls(vec[:-1].copy(), float(vec[-1]), layer_shapes)

    def checksum(self) -> str:
        h = hashlib.sha256()
        h.update(self.weights.astype("<f8").tobytes())
        h.update(np.float64(self.intercept).astype("<f8").tobytes())
        h.update(repr(self.layer_shapes).encode())
        return h.hexdigest()

    def __eq__(self, other):
        # bitwise equality, so -0.0 and 0.0 differ and NaN equals itself
        if not isinstance(other, ModelParams):
            return NotImplemented
        return (
            self.layer_shapes == other.layer_shapes
            and self.weights.shape == other.weights.shape
            and self.weights.astype("<f8").tobytes() == other.weights.astype("<f8").tobytes()
            and np.float64(self.intercept).tobytes() == np.float64(other.intercept).tobytes()
        )

    def __repr__(self):
        kind = "linear" if self.is_linear else f"ffn{list(self.layer_shapes)}"
        return f"ModelParams({kind}, n={self.weights.size}, intercept={self.intercept!r})"


def as_matrix(features) -> np.ndarray:
    """Coerce a FeatureVector, a sequence of them, or an array to a 2-D float array."""
    if isinstance(features, FeatureVector):
        return features.values[None, :]
    if isinstance(features, Sequence) and features and isinstance(features[0], FeatureVector):
        return np.vstack([f.values for f in features])
    arr = np.asarray(features, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ShapeError(f"expected 1-D or 2-D features, got shape {arr.shape}")
    return arr


def split_training_set(train) -> tuple[np.ndarray, np.ndarray]:
    """Accept ``(X, y)`` arrays or a list of ``(FeatureVector | array, age)`` pairs."""
    if isinstance(train, tuple) and len(train) == 2 and not np.isscalar(train[1]):
        X = as_matrix(train[0])
        y = np.asarray(train[1], dtype=np.float64).reshape(-1)
    else:
        pairs = list(train)
        if not pairs:
            return np.zeros((0, 0)), np.zeros(0)
        X = np.vstack([as_matrix(f) for f, _ in pairs])
        y = np.array([float(a) for _, a in pairs])
    if X.shape[0] != y.shape[0]:
        raise ShapeError(f"{X.shape[0]} feature rows for {y.shape[0]} targets")
    return np.ascontiguousarray(X), np.ascontiguousarray(y)
