"""Learning-rate schedules and training configuration."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

from ..errors import ConfigError, ScheduleBoundsError

SCHEDULE_KINDS = ("inverse_scaling", "linear_decay", "constant")
OPTIMIZERS = ("sgd", "adam")


@dataclass(frozen=True)
class LrSchedule:
    kind: str
    eta0: float
    horizon: int
    eta_end: float = 0.0
    power: float = 0.25

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ConfigError(f"unknown schedule kind {self.kind!r}")
        # eta0 = 0 is allowed as a frozen-model schedule
        if not self.eta0 >= 0:
            raise ConfigError("eta0 must be non-negative")
        if int(self.horizon) < 1:
            raise ConfigError("horizon must be a positive integer")
        if self.kind == "linear_decay" and not 0 <= self.eta_end <= self.eta0:
            raise ConfigError("linear_decay needs 0 <= eta_end <= eta0")
        if self.kind == "inverse_scaling" and not self.power > 0:
            raise ConfigError("inverse_scaling needs power > 0")

    @classmethod
    def inverse_scaling(cls, eta0, horizon, power=0.25):
        return cls("inverse_scaling", eta0, horizon, power=power)

    @classmethod
    def linear_decay(cls, eta0, eta_end, horizon):
        return cls("linear_decay", eta0, horizon, eta_end=eta_end)

    @classmethod
    def constant(cls, eta0, horizon):
        return cls("constant", eta0, horizon)

    def with_horizon(self, horizon: int) -> "LrSchedule":
        return replace(self, horizon=horizon)

    def to_dict(self):
        return asdict(self)


def schedule_value(sched: LrSchedule, step: int) -> float:
    """Learning rate at 1-based ``step`` of the schedule's horizon."""
    if not 1 <= step <= sched.horizon:
        raise ScheduleBoundsError(f"step {step} outside 1..{sched.horizon}")
    if sched.kind == "inverse_scaling":
        return sched.eta0 / step**sched.power
    if sched.kind == "linear_decay":
        if sched.horizon == 1:
            return sched.eta0
        frac = (step - 1) / (sched.horizon - 1)
        # interpolation form hits both endpoints exactly
        return sched.eta0 * (1.0 - frac) + sched.eta_end * frac
    return sched.eta0


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    schedule: LrSchedule
    batch_size: int = 8
    l2_penalty: float = 0.0
    optimizer: str = "sgd"
    seed: int = 0
    intercept_init: float = 0.0
    hidden: tuple[int, ...] = field(default=(64, 32))

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be positive")
        if self.l2_penalty < 0:
            raise ConfigError("l2_penalty must be >= 0")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.seed < 0:
            raise ConfigError("seed must be unsigned")

    def replace(self, **changes) -> "TrainConfig":
        return replace(self, **changes)
