"""Experiment configuration and the train / predict protocol per training configuration."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..brainage import PredictionRecord
from ..cohort import (
    CohortSpec,
    NormStats,
    apply_minmax,
    column,
    fit_minmax,
    generate_cohort,
    load_cohort_csv,
    radiomic_features,
    stratified_center_kfold,
    volume_features,
)
from ..errors import ConfigError
from ..federation import ClientSite, FederationPlan, InProcessTransport, run_federation
from ..model import (
    DEFAULT_L2_GRID,
    LrSchedule,
    TrainConfig,
    expand_polynomial,
    fit_feedforward,
    fit_linear_sgd,
    predict,
    tune_l2_cv,
)

CONFIGURATIONS = ("centralized", "federated", "single_site")
PAPER_BUDGET = 1000
DESK_BUDGET = 100


@dataclass(frozen=True)
class FamilySettings:
    name: str
    model: str  # "linear" | "feedforward"
    inputs: str  # "volume" | "volume_poly" | "radiomic"
    central: tuple  # (kind, eta0, eta_end)
    federated: tuple  # (kind, eta0, eta_end)
    central_optimizer: str = "sgd"
    federated_round_fraction: float = 1.0


FAMILIES = {
    "vol_simple": FamilySettings("vol_simple", "linear", "volume", ("inverse_scaling", 0.5, 0.0), ("linear_decay", 0.1, 0.01)),
    "vol_augmented": FamilySettings(
        "vol_augmented", "linear", "volume_poly", ("inverse_scaling", 0.07, 0.0), ("linear_decay", 0.02, 0.002)
    ),
    "radiomics_like": FamilySettings(
        "radiomics_like", "linear", "radiomic", ("inverse_scaling", 0.004, 0.0), ("linear_decay", 0.01, 0.001)
    ),
    "feedforward": FamilySettings(
        "feedforward",
        "feedforward",
        "radiomic",
        ("linear_decay", 0.001, 0.0001),
        ("linear_decay", 0.0005, 0.00005),
        central_optimizer="adam",
        federated_round_fraction=0.5,
    ),
}


@dataclass
class ExperimentConfig:
    cohort: dict = field(default_factory=lambda: {"generate": {}})
    families: list = field(default_factory=lambda: ["vol_simple", "vol_augmented", "radiomics_like", "feedforward"])
    configurations: list = field(default_factory=lambda: list(CONFIGURATIONS))
    reference_center: Optional[int] = None
    cv_folds_test: int = 5
    cv_folds_correction: int = 10
    seeds: list = field(default_factory=lambda: [0])
    epochs: int = DESK_BUDGET
    paper_budget: bool = False
    rounds: dict = field(default_factory=dict)
    batch_size: int = 8
    inverse_power: float = 0.25
    tune_l2: bool = True
    l2_grid: list = field(default_factory=lambda: list(DEFAULT_L2_GRID))
    l2_cv_folds: int = 5
    hidden: list = field(default_factory=lambda: [64, 32])
    n_volume_features: int = 32
    transport: str = "inproc"
    timeout: float = 60.0
    output_dir: str = "out"

    def __post_init__(self):
        self.validate()

    def validate(self):
        def bad(path, msg):
            raise ConfigError(f"config.{path}: {msg}")

        if not isinstance(self.cohort, dict) or len(self.cohort) != 1 or next(iter(self.cohort)) not in ("generate", "csv"):
            bad("cohort", 'must be {"generate": {...}} or {"csv": "<path>"}')
        if "generate" in self.cohort:
            if not isinstance(self.cohort["generate"], dict):
                bad("cohort.generate", "must be an object")
            try:
                CohortSpec.from_dict(self.cohort["generate"])
            except ConfigError as exc:
                bad("cohort.generate", str(exc))
        for i, fam in enumerate(self.families):
            if fam not in FAMILIES:
                bad(f"families[{i}]", f"unknown family {fam!r}; expected one of {sorted(FAMILIES)}")
        if not self.families:
            bad("families", "must not be empty")
        for i, conf in enumerate(self.configurations):
            if conf not in CONFIGURATIONS:
                bad(f"configurations[{i}]", f"unknown configuration {conf!r}; expected one of {list(CONFIGURATIONS)}")
        if not self.configurations:
            bad("configurations", "must not be empty")
        if self.cv_folds_test < 2:
            bad("cv_folds_test", "must be >= 2")
        if self.cv_folds_correction < 2:
            bad("cv_folds_correction", "must be >= 2")
        if not self.seeds or any((not isinstance(s, int)) or s < 0 for s in self.seeds):
            bad("seeds", "must be a non-empty list of unsigned integers")
        if not isinstance(self.epochs, int) or self.epochs < 1:
            bad("epochs", "must be a positive integer")
        for fam, r in self.rounds.items():
            if fam not in FAMILIES:
                bad(f"rounds.{fam}", "unknown family")
            if not isinstance(r, int) or r < 1:
                bad(f"rounds.{fam}", "must be a positive integer")
        if self.batch_size < 1:
            bad("batch_size", "must be positive")
        if not self.l2_grid:
            bad("l2_grid", "must not be empty")
        if any(v < 0 for v in self.l2_grid):
            bad("l2_grid", "penalties must be >= 0")
        if self.transport not in ("inproc", "tcp"):
            bad("transport", "must be 'inproc' or 'tcp'")
        if not self.hidden or any(int(h) < 1 for h in self.hidden):
            bad("hidden", "must list positive layer widths")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config: top level must be a JSON object")
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"config: unknown keys {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json_file(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: invalid JSON ({exc})") from None
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def budget(self) -> int:
        return PAPER_BUDGET if self.paper_budget else self.epochs

    def rounds_for(self, family: str) -> int:
        if family in self.rounds:
            return self.rounds[family]
        return max(1, int(round(self.budget * FAMILIES[family].federated_round_fraction)))


def load_cohort(cfg: ExperimentConfig, base_dir=None):
    if "csv" in cfg.cohort:
        path = Path(cfg.cohort["csv"])
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        return load_cohort_csv(path)
    return generate_cohort(CohortSpec.from_dict(cfg.cohort["generate"]))


def reference_center(cfg: ExperimentConfig, cohort) -> int:
    centers = column(cohort, "center_id")
    if cfg.reference_center is not None:
        if cfg.reference_center not in set(centers.tolist()):
            raise ConfigError(f"config.reference_center: center {cfg.reference_center} has no subjects")
        return cfg.reference_center
    ids, counts = np.unique(centers, return_counts=True)
    if ids.size < 2:
        raise ConfigError("cohort needs at least two centers (reference + test)")
    # ties resolved toward the lowest center id
    return int(ids[np.argmax(counts)])


def raw_inputs(cohort, family: str, n_volume: int) -> np.ndarray:
    kind = FAMILIES[family].inputs
    if kind in ("volume", "volume_poly"):
        return volume_features(cohort, n_volume)
    X = radiomic_features(cohort, n_volume)
    if X.shape[1] == 0:
        raise ConfigError(f"family {family} needs radiomic-like features but the cohort has none")
    return X


def finish_inputs(stats: NormStats, X: np.ndarray, family: str) -> np.ndarray:
    Xn = apply_minmax(stats, X)
    if FAMILIES[family].inputs == "volume_poly":
        Xn = expand_polynomial(Xn, 2)
    return np.ascontiguousarray(Xn)


@dataclass
class FoldData:
    """Normalized training/test matrices for one protocol fold."""

    fold: int  # -1 for single-site
    train_ids: np.ndarray
    train_centers: np.ndarray
    X_train: np.ndarray
    y_train: np.ndarray
    test_ids: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    reference_mean_age: float


class ProtocolData:
    """Caches the per-family raw inputs and the fold assignment for one cohort."""

    def __init__(self, cfg: ExperimentConfig, cohort):
        self.cfg = cfg
        self.cohort = list(cohort)
        self.ref = reference_center(cfg, self.cohort)
        self.ids = column(self.cohort, "subject_id")
        self.centers = column(self.cohort, "center_id")
        self.ages = column(self.cohort, "age").astype(float)
        self.is_ref = self.centers == self.ref
        self._raw = {}
        self._folds = {}

    def raw(self, family):
        if family not in self._raw:
            self._raw[family] = raw_inputs(self.cohort, family, self.cfg.n_volume_features)
        return self._raw[family]

    def fold_of(self, seed: int) -> np.ndarray:
        """Fold index for every subject; -1 for the reference center."""
        if seed not in self._folds:
            test = [r for r, m in zip(self.cohort, self.is_ref) if not m]
            assign = stratified_center_kfold(test, self.cfg.cv_folds_test, seed)
            self._folds[seed] = np.array([assign.get(int(i), -1) for i in self.ids])
        return self._folds[seed]

    def fold_data(self, family: str, seed: int, fold: int) -> FoldData:
        X = self.raw(family)
        if fold < 0:
            train = self.is_ref
            test = ~self.is_ref
        else:
            folds = self.fold_of(seed)
            test = folds == fold
            train = ~test
        stats = fit_minmax(X[train])
        return FoldData(
            fold=fold,
            train_ids=self.ids[train],
            train_centers=self.centers[train],
            X_train=finish_inputs(stats, X[train], family),
            y_train=self.ages[train],
            test_ids=self.ids[test],
            X_test=finish_inputs(stats, X[test], family),
            y_test=self.ages[test],
            reference_mean_age=float(self.ages[self.is_ref].mean()),
        )

    def client_site(self, family: str, seed: int, fold: int, center_id: int) -> Optional[ClientSite]:
        fd = self.fold_data(family, seed, fold)
        mask = fd.train_centers == center_id
        if not mask.any():
            return None
        return ClientSite(
            int(center_id), int(mask.sum()), (fd.X_train[mask], fd.y_train[mask]), client_seed(seed, fold, center_id)
        )


def train_seed(seed: int, fold: int) -> int:
    return int(seed) * 100 + (fold if fold >= 0 else 99)


def client_seed(seed: int, fold: int, center_id: int) -> int:
    return int(seed) * 100_000 + (fold + 1) * 1000 + int(center_id)


def train_config(cfg: ExperimentConfig, family: str, configuration: str, seed: int, fold: int, intercept_init: float, l2: float = 0.0) -> TrainConfig:
    fam = FAMILIES[family]
    if configuration == "federated":
        kind, eta0, eta_end = fam.federated
        horizon = cfg.rounds_for(family)
        optimizer = "sgd"
    else:
        kind, eta0, eta_end = fam.central
        horizon = cfg.budget
        optimizer = fam.central_optimizer
    if kind == "inverse_scaling":
        sched = LrSchedule.inverse_scaling(eta0, horizon, cfg.inverse_power)
    else:
        sched = LrSchedule.linear_decay(eta0, eta_end, horizon)
    return TrainConfig(
        epochs=horizon,
        schedule=sched,
        batch_size=cfg.batch_size,
        l2_penalty=float(l2),
        optimizer=optimizer,
        seed=train_seed(seed, fold),
        intercept_init=float(intercept_init),
        hidden=tuple(int(h) for h in cfg.hidden),
    )


class ProtocolRunner:
    """Runs the per-configuration protocol for one experiment config and cohort.

    Single-site: train on the reference center, predict every other subject.
    Centralized / federated: for each center-stratified fold of the test set,
    train on the reference center plus the other folds and predict the
    held-out fold.
    """

    def __init__(self, cfg: ExperimentConfig, cohort, transport=None):
        self.cfg = cfg
        self.data = ProtocolData(cfg, cohort)
        self.transport = transport
        self._single_site_l2 = {}
        self.round_histories = {}

    def _fit(self, family, X, y, tcfg):
        if FAMILIES[family].model == "feedforward":
            return fit_feedforward((X, y), tcfg)
        return fit_linear_sgd((X, y), tcfg)

    def _tuned_l2(self, family, X, y, tcfg) -> float:
        if not self.cfg.tune_l2 or FAMILIES[family].model != "linear":
            return 0.0
        return tune_l2_cv((X, y), self.cfg.l2_grid, self.cfg.l2_cv_folds, tcfg)

    def single_site_l2(self, family: str, seed: int) -> float:
        key = (family, seed)
        if key not in self._single_site_l2:
            fd = self.data.fold_data(family, seed, -1)
            tcfg = train_config(self.cfg, family, "single_site", seed, -1, fd.reference_mean_age)
            self._single_site_l2[key] = self._tuned_l2(family, fd.X_train, fd.y_train, tcfg)
        return self._single_site_l2[key]

    def federation_plan(self, family: str, seed: int, fold: int, fd: FoldData, with_data: bool = True) -> FederationPlan:
        l2 = self.single_site_l2(family, seed)
        tcfg = train_config(self.cfg, family, "federated", seed, fold, fd.reference_mean_age, l2)
        sites = []
        for center in np.unique(fd.train_centers):
            mask = fd.train_centers == center
            data = (fd.X_train[mask], fd.y_train[mask]) if with_data else None
            sites.append(ClientSite(int(center), int(mask.sum()), data, client_seed(seed, fold, int(center))))
        meta = {"family": family, "seed": int(seed), "fold": int(fold), "l2_penalty": float(l2)}
        return FederationPlan(
            sites, tcfg.epochs, tcfg, model=FAMILIES[family].model, meta=meta
        )

    def _predict_fold(self, family, configuration, seed, fold):
        fd = self.data.fold_data(family, seed, fold)
        if configuration == "federated":
            remote = self.transport is not None and not isinstance(self.transport, InProcessTransport)
            plan = self.federation_plan(family, seed, fold, fd, with_data=not remote)
            transport = self.transport or InProcessTransport()
            params, history = run_federation(plan, transport, input_dim=fd.X_train.shape[1])
            self.round_histories[(family, seed, fold)] = history
        else:
            intercept = fd.y_train.mean() if configuration == "centralized" else fd.reference_mean_age
            tcfg = train_config(self.cfg, family, configuration, seed, fold, intercept)
            l2 = self.single_site_l2(family, seed) if configuration == "single_site" else self._tuned_l2(
                family, fd.X_train, fd.y_train, tcfg
            )
            params = self._fit(family, fd.X_train, fd.y_train, tcfg.replace(l2_penalty=l2))
        preds = predict(params, fd.X_test)
        return [PredictionRecord(int(i), float(a), float(p)) for i, a, p in zip(fd.test_ids, fd.y_test, preds)]

    def run(self, family: str, configuration: str, seed: int) -> list[PredictionRecord]:
        if family not in FAMILIES:
            raise ConfigError(f"unknown family {family!r}")
        if configuration not in CONFIGURATIONS:
            raise ConfigError(f"unknown configuration {configuration!r}")
        if configuration == "single_site":
            records = self._predict_fold(family, configuration, seed, -1)
        else:
            records = []
            for fold in range(self.cfg.cv_folds_test):
                records.extend(self._predict_fold(family, configuration, seed, fold))
        return sorted(records, key=lambda r: r.subject_id)


def run_training_protocol(cfg: ExperimentConfig, cohort, family: str, configuration: str, seed: int = 0, transport=None):
    """Predictions for every test subject (all subjects outside the reference center)."""
    return ProtocolRunner(cfg, cohort, transport).run(family, configuration, seed)
