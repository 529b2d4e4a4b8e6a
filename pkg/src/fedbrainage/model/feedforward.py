"""Small fully connected regressor with layer normalization after each hidden layer.

Architecture: input -> [dense -> layernorm -> relu] * len(hidden) -> dense(1).
All parameters except the output bias live in one flat vector so FedAvg can
treat this model exactly like the linear one; the output bias is the
``intercept`` of ModelParams.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DivergenceError, InsufficientDataError, ShapeError
from .linear import epoch_permutation
from .params import ModelParams, split_training_set
from .schedules import TrainConfig, schedule_value

LN_EPS = 1e-5
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def layer_shapes_for(input_dim: int, hidden=(64, 32)) -> tuple[tuple[int, int], ...]:
    dims = [input_dim, *hidden, 1]
    return tuple(zip(dims[:-1], dims[1:]))


def param_layout(layer_shapes):
    """List of (name, layer, shape, slice) entries describing the flat vector."""
    layout = []
    offset = 0
    last = len(layer_shapes) - 1
    for idx, (n_in, n_out) in enumerate(layer_shapes):
        names = [("W", (n_in, n_out))]
        if idx < last:
            names += [("b", (n_out,)), ("gamma", (n_out,)), ("beta", (n_out,))]
        for name, shape in names:
            size = int(np.prod(shape))
            layout.append((name, idx, shape, slice(offset, offset + size)))
            offset += size
    return layout


def param_count(layer_shapes) -> int:
    return param_layout(layer_shapes)[-1][3].stop


def unpack(params: ModelParams) -> list[dict]:
    layers = [dict() for _ in params.layer_shapes]
    for name, idx, shape, sl in param_layout(params.layer_shapes):
        layers[idx][name] = params.weights[sl].reshape(shape)
    return layers


def init_feedforward(input_dim: int, hidden, seed: int, intercept: float) -> ModelParams:
    shapes = layer_shapes_for(input_dim, hidden)
    rng = np.random.default_rng([int(seed), 0x1F1])
    flat = np.zeros(param_count(shapes))
    for name, _, shape, sl in param_layout(shapes):
        if name == "W":
            flat[sl] = rng.normal(0.0, np.sqrt(2.0 / shape[0]), size=shape).ravel()
        elif name == "gamma":
            flat[sl] = 1.0
    return ModelParams(flat, intercept, shapes)


def _forward_cache(params: ModelParams, X: np.ndarray):
    if X.shape[1] != params.input_dim:
        raise ShapeError(f"{X.shape[1]} features for a model expecting {params.input_dim}")
    layers = unpack(params)
    cache = []
    a = X
    for layer in layers[:-1]:
        z = a @ layer["W"] + layer["b"]
        mu = z.mean(axis=1, keepdims=True)
        inv_std = 1.0 / np.sqrt(z.var(axis=1, keepdims=True) + LN_EPS)
        zhat = (z - mu) * inv_std
        u = layer["gamma"] * zhat + layer["beta"]
        cache.append((a, zhat, inv_std, u))
        a = np.maximum(u, 0.0)
    out = a @ layers[-1]["W"][:, 0] + params.intercept
    return out, a, cache, layers


def forward(params: ModelParams, X) -> np.ndarray:
    out, *_ = _forward_cache(params, np.atleast_2d(np.asarray(X, dtype=np.float64)))
    return out


def loss_and_grad(params: ModelParams, X, y, loss: str = "mae"):
    """Mean loss over the batch and its gradient as (flat weight grad, intercept grad).

    ``loss`` is ``"mae"`` (training objective; subgradient with sign(0)=0) or
    ``"mse"`` (half squared error; smooth, used for gradient checking).
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    m = X.shape[0]
    out, a_last, cache, layers = _forward_cache(params, X)
    r = out - y
    if loss == "mae":
        value = float(np.mean(np.abs(r)))
        g = np.sign(r) / m
    elif loss == "mse":
        value = float(0.5 * np.mean(r * r))
        g = r / m
    else:
        raise ValueError(f"unknown loss {loss!r}")

    grads = [dict() for _ in layers]
    w_out = layers[-1]["W"]
    grads[-1]["W"] = a_last.T @ g[:, None]
    d_intercept = float(g.sum())
    da = g[:, None] * w_out[:, 0][None, :]
    for idx in range(len(layers) - 2, -1, -1):
        a_prev, zhat, inv_std, u = cache[idx]
        layer = layers[idx]
        du = da * (u > 0)
        grads[idx]["gamma"] = (du * zhat).sum(axis=0)
        grads[idx]["beta"] = du.sum(axis=0)
        dzhat = du * layer["gamma"]
        dz = inv_std * (
            dzhat
            - dzhat.mean(axis=1, keepdims=True)
            - zhat * (dzhat * zhat).mean(axis=1, keepdims=True)
        )
        grads[idx]["W"] = a_prev.T @ dz
        grads[idx]["b"] = dz.sum(axis=0)
        da = dz @ layer["W"].T

    flat = np.empty_like(params.weights)
    for name, idx, _, sl in param_layout(params.layer_shapes):
        flat[sl] = grads[idx][name].ravel()
    return value, flat, d_intercept


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, size: int) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size))


def _apply_update(params, g_w, g_b, lr, cfg: TrainConfig, state):
    if cfg.optimizer == "adam":
        grad = np.append(g_w, g_b)
        state.t += 1
        state.m = ADAM_BETA1 * state.m + (1 - ADAM_BETA1) * grad
        state.v = ADAM_BETA2 * state.v + (1 - ADAM_BETA2) * grad * grad
        m_hat = state.m / (1 - ADAM_BETA1**state.t)
        v_hat = state.v / (1 - ADAM_BETA2**state.t)
        step = lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
        w = params.weights - step[:-1]
        b = params.intercept - step[-1]
    else:
        w = params.weights - lr * g_w
        b = params.intercept - lr * g_b
    if cfg.l2_penalty:
        w = w / (1.0 + 2.0 * lr * cfg.l2_penalty)
    return ModelParams(w, b, params.layer_shapes)


def run_feedforward_epoch(X, y, params: ModelParams, lr, cfg: TrainConfig, seed, epoch, state=None):
    """One shuffled minibatch pass; returns (params, mean batch loss, optimizer state)."""
    n = X.shape[0]
    if cfg.optimizer == "adam" and state is None:
        state = AdamState.zeros(params.weights.size + 1)
    order = epoch_permutation(n, seed, epoch)
    total = 0.0
    for batch_no, start in enumerate(range(0, n, cfg.batch_size)):
        idx = order[start : start + cfg.batch_size]
        value, g_w, g_b = loss_and_grad(params, X[idx], y[idx])
        params = _apply_update(params, g_w, g_b, lr, cfg, state)
        if not (np.isfinite(value) and params.is_finite()):
            raise DivergenceError(
                f"epoch {epoch} batch {batch_no + 1}",
                f"non-finite loss encountered at epoch {epoch}, batch {batch_no + 1}",
            )
        total += value * idx.size
    return params, total / n, state


def fit_feedforward(train, cfg: TrainConfig, return_history: bool = False):
    X, y = split_training_set(train)
    if X.shape[0] == 0:
        raise InsufficientDataError("empty training set")
    params = init_feedforward(X.shape[1], cfg.hidden, cfg.seed, cfg.intercept_init)
    state = None
    history = []
    for epoch in range(1, cfg.epochs + 1):
        lr = schedule_value(cfg.schedule, epoch)
        params, loss, state = run_feedforward_epoch(X, y, params, lr, cfg, cfg.seed, epoch, state)
        history.append(loss)
    if return_history:
        return params, history
    return params
