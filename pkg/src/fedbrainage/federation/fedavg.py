"""FedAvg: broadcast, one local epoch per client, sample-weighted aggregation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import ConfigError, ProtocolError, RoundFailureError, ShapeError
from ..model.feedforward import init_feedforward, run_feedforward_epoch
from ..model.linear import run_linear_epoch
from ..model.params import ModelParams, split_training_set
from ..model.schedules import TrainConfig, schedule_value


@dataclass
class ClientSite:
    """One hospital center. ``local_data`` is None on the server side of a remote run."""

    client_id: int
    sample_count: int
    local_data: Optional[tuple[np.ndarray, np.ndarray]] = None
    local_seed: int = 0

    def __post_init__(self):
        if self.local_data is not None:
            self.local_data = split_training_set(self.local_data)
            if self.local_data[0].shape[0] != self.sample_count:
                raise ConfigError(
                    f"client {self.client_id}: sample_count {self.sample_count} "
                    f"!= {self.local_data[0].shape[0]} local samples"
                )
        if self.sample_count < 1:
            raise ConfigError(f"client {self.client_id}: sample_count must be positive")

    @classmethod
    def from_data(cls, client_id, X, y, local_seed=0):
        X, y = split_training_set((X, y))
        return cls(client_id, X.shape[0], (X, y), local_seed)


@dataclass
class FederationPlan:
    clients: list[ClientSite]
    rounds: int
    train_cfg: TrainConfig
    model: str = "linear"
    local_epochs_per_round: int = 1
    intercept_init_source: str = "center1_mean"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        ids = [c.client_id for c in self.clients]
        if not ids:
            raise ConfigError("a federation needs at least one client")
        if len(set(ids)) != len(ids):
            raise ConfigError("client ids must be unique")
        if self.rounds < 1:
            raise ConfigError("rounds must be positive")
        if self.local_epochs_per_round != 1:
            raise ConfigError("exactly one local epoch per round is supported")
        if self.model not in ("linear", "feedforward"):
            raise ConfigError(f"unknown model {self.model!r}")
        if self.train_cfg.schedule.horizon < self.rounds:
            raise ConfigError("schedule horizon shorter than the round budget")

    @property
    def client_ids(self) -> list[int]:
        return sorted(c.client_id for c in self.clients)

    def initial_params(self, input_dim: int) -> ModelParams:
        cfg = self.train_cfg
        if self.model == "feedforward":
            return init_feedforward(input_dim, cfg.hidden, cfg.seed, cfg.intercept_init)
        return ModelParams(np.zeros(input_dim), cfg.intercept_init)


@dataclass
class ClientUpdate:
    client_id: int
    params: ModelParams
    n_samples: int
    loss: float = float("nan")


@dataclass
class RoundRecord:
    round_index: int
    client_losses: dict[int, float]
    checksum: str


def client_update(client: ClientSite, global_params: ModelParams, round_index: int, cfg: TrainConfig) -> ClientUpdate:
    """Exactly one local epoch from the received global parameters."""
    if client.local_data is None:
        raise ConfigError(f"client {client.client_id} has no local data")
    X, y = client.local_data
    if X.shape[1] != global_params.input_dim:
        raise ShapeError(
            f"client {client.client_id}: {X.shape[1]} features, global model expects {global_params.input_dim}"
        )
    lr = schedule_value(cfg.schedule, round_index)
    if global_params.is_linear:
        params, loss = run_linear_epoch(X, y, global_params, lr, cfg, client.local_seed, round_index)
    else:
        # optimizer state does not persist across rounds
        params, loss, _ = run_feedforward_epoch(X, y, global_params, lr, cfg, client.local_seed, round_index)
    return ClientUpdate(client.client_id, params, client.sample_count, loss)


def local_epoch(client: ClientSite, global_params: ModelParams, round_index: int, cfg: TrainConfig) -> ModelParams:
    return client_update(client, global_params, round_index, cfg).params


def _pairwise_sum(terms: list[np.ndarray]) -> np.ndarray:
    if len(terms) == 1:
        return terms[0]
    mid = len(terms) // 2
    return _pairwise_sum(terms[:mid]) + _pairwise_sum(terms[mid:])


def _canonical(updates) -> list[tuple[ModelParams, int, tuple]]:
    rows = []
    for u in updates:
        if isinstance(u, ClientUpdate):
            params, n, key = u.params, u.n_samples, (0, u.client_id)
        else:
            params, n = u
            key = (1, int(n), params.weights.tobytes(), np.float64(params.intercept).tobytes())
        rows.append((params, int(n), key))
    rows.sort(key=lambda r: r[2])
    return rows


def aggregate_fedavg(updates) -> ModelParams:
    """Sample-weighted mean of client parameters, sum(n_k * theta_k) / sum(n_k).

    ``updates`` holds ClientUpdate objects or ``(ModelParams, n_samples)``
    pairs. Updates are put in a fixed order (client id, or a content key for
    bare pairs) and combined as ``ref + sum_k w_k * (theta_k - ref)`` with
    pairwise summation, which makes the result independent of list order and
    exactly ``theta`` when all clients agree.
    """
    rows = _canonical(updates)
    if not rows:
        raise ProtocolError("no client updates to aggregate")
    shapes = rows[0][0].layer_shapes
    size = rows[0][0].weights.size
    for params, n, _ in rows:
        if params.layer_shapes != shapes or params.weights.size != size:
            raise ShapeError("client updates have incompatible parameter shapes")
        if n <= 0:
            raise ProtocolError("sample counts must be positive")
    stack = np.vstack([p.as_vector() for p, _, _ in rows])
    counts = np.array([n for _, n, _ in rows], dtype=np.float64)
    frac = counts / counts.sum()
    ref = stack[0]
    merged = ref + _pairwise_sum([f * (row - ref) for f, row in zip(frac, stack)])
    merged = np.clip(merged, stack.min(axis=0), stack.max(axis=0))
    return ModelParams.from_vector(merged, shapes)


def run_federation(plan: FederationPlan, transport, input_dim: Optional[int] = None):
    """Run ``plan.rounds`` synchronous FedAvg rounds through ``transport``.

    Returns the final global parameters and one RoundRecord per round.
    """
    if input_dim is None:
        dims = {c.local_data[0].shape[1] for c in plan.clients if c.local_data is not None}
        if len(dims) != 1:
            raise ConfigError("input_dim is required when clients hold no local data")
        input_dim = dims.pop()
    global_params = plan.initial_params(input_dim)
    expected = plan.client_ids
    counts = {c.client_id: c.sample_count for c in plan.clients}
    history = []
    for r in range(1, plan.rounds + 1):
        updates = transport.run_round(plan, r, global_params)
        got = {u.client_id: u for u in updates}
        for cid in expected:
            if cid not in got:
                raise RoundFailureError(r, cid, "no update received")
            if got[cid].n_samples != counts[cid]:
                raise RoundFailureError(r, cid, f"reported {got[cid].n_samples} samples, expected {counts[cid]}")
        extra = sorted(set(got) - set(expected))
        if extra:
            raise RoundFailureError(r, extra[0], "client is not part of the plan")
        global_params = aggregate_fedavg(list(got.values()))
        history.append(
            RoundRecord(r, {cid: got[cid].loss for cid in expected}, global_params.checksum())
        )
    return global_params, history
