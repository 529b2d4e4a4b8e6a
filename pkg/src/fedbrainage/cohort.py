"""Synthetic multi-center stroke cohorts, normalization, fold assignment and CSV I/O.

Every subject has a latent brain age: chronological age, plus a planted
offset for diabetic subjects, plus noise. Volume-like and radiomic-like
features are noisy functions of that latent, distorted per center by an
affine site effect. The 3-month mRS is drawn from an ordinal logistic model
whose "good outcome" cut (mRS <= 2) is an exact logistic regression on age,
NIHSS, treatment covariates and the latent brain-age gap.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError, IngestionError

# Participants per center (largest first), 1674 in total.
DEFAULT_CENTER_SIZES = (651, 184, 135, 84, 83, 82, 79, 66, 63, 62, 46, 44, 32, 30, 23, 10)
PHENOTYPES = ("sex", "htn", "dm", "af", "smk", "hcl")
CLINICAL_COLUMNS = (
    "subject_id", "center_id", "age", "sex", "htn", "dm", "af", "smk", "hcl",
    "nihss", "p2p", "ivt", "reca", "mrs_3m", "icv",
)
INT_COLUMNS = {"subject_id", "center_id", "sex", "htn", "dm", "af", "smk", "hcl", "nihss", "ivt", "reca", "mrs_3m"}
BINARY_COLUMNS = {"sex", "htn", "dm", "af", "smk", "hcl", "ivt", "reca"}
ICV_REFERENCE = 1500.0


def _default_prevalence():
    return {"sex": 0.46, "htn": 0.67, "dm": 0.21, "af": 0.39, "smk": 0.17, "hcl": 0.41, "ivt": 0.58, "reca": 0.82}


def _default_outcome():
    # Logit of a *poor* outcome; age/nihss centered at 70 years / 16 points.
    return {
        "intercept": 0.0,
        "age": 0.04,
        "nihss": 0.10,
        "brain_aging": 0.12,
        "ivt": -0.2,
        "reca": -1.2,
        "p2p": 0.0,
        "cutpoints": [-3.5, -2.5, -1.3, -0.5, 0.4, 1.5],
    }


@dataclass
class CohortSpec:
    n_centers: int = 16
    subjects_per_center: list[int] = field(default_factory=lambda: list(DEFAULT_CENTER_SIZES))
    age_mean: float = 70.03
    age_sd: float = 14.71
    center_age_means: Optional[list[float]] = None
    n_volume_features: int = 32
    n_radiomic_features: int = 256
    latent_noise_sd: float = 4.0
    feature_noise: float = 1.0
    site_scale_sd: float = 0.1
    site_shift_sd: float = 0.1
    dm_feature_offset: float = 5.0
    prevalence: dict = field(default_factory=_default_prevalence)
    nihss_mean: float = 16.0
    nihss_sd: float = 7.0
    p2p_median: list[float] = field(default_factory=lambda: [46.0] + [140.0] * 15)
    outcome_model: dict = field(default_factory=_default_outcome)
    seed: int = 0

    def __post_init__(self):
        if self.n_centers < 1:
            raise ConfigError("n_centers must be positive")
        if len(self.subjects_per_center) != self.n_centers:
            raise ConfigError(
                f"subjects_per_center has {len(self.subjects_per_center)} entries for {self.n_centers} centers"
            )
        if any(int(n) < 0 for n in self.subjects_per_center):
            raise ConfigError("subjects_per_center entries must be >= 0")
        if self.center_age_means is not None and len(self.center_age_means) != self.n_centers:
            raise ConfigError("center_age_means must have one entry per center")
        if len(self.p2p_median) not in (1, self.n_centers):
            raise ConfigError("p2p_median must have 1 or n_centers entries")
        if self.n_volume_features < 1 or self.n_radiomic_features < 0:
            raise ConfigError("feature counts must be positive")
        if self.n_radiomic_features > 1560:
            raise ConfigError("at most 1560 radiomic-like features are supported")
        if self.age_sd < 0 or self.latent_noise_sd < 0 or self.feature_noise < 0:
            raise ConfigError("standard deviations must be >= 0")
        if self.site_scale_sd < 0 or self.site_shift_sd < 0:
            raise ConfigError("site-effect spreads must be >= 0")
        cuts = self.outcome_model.get("cutpoints", [])
        if len(cuts) != 6 or any(b <= a for a, b in zip(cuts, cuts[1:])):
            raise ConfigError("outcome_model.cutpoints must be 6 increasing values")
        for key, p in self.prevalence.items():
            if not 0 <= p <= 1:
                raise ConfigError(f"prevalence[{key}] must be in [0, 1]")

    @property
    def n_features(self) -> int:
        return self.n_volume_features + self.n_radiomic_features

    @property
    def total_subjects(self) -> int:
        return int(sum(self.subjects_per_center))

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "CohortSpec":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown cohort spec keys: {sorted(unknown)}")
        data = dict(data)
        if "outcome_model" in data:
            data["outcome_model"] = {**_default_outcome(), **data["outcome_model"]}
        if "prevalence" in data:
            data["prevalence"] = {**_default_prevalence(), **data["prevalence"]}
        if "n_centers" in data and "subjects_per_center" not in data and data["n_centers"] != 16:
            raise ConfigError("subjects_per_center is required when n_centers differs from 16")
        if "n_centers" in data and "p2p_median" not in data and data["n_centers"] != 16:
            data["p2p_median"] = [140.0]
        return cls(**data)

    @classmethod
    def from_json(cls, text: str) -> "CohortSpec":
        return cls.from_dict(json.loads(text))


@dataclass(eq=False)
class SubjectRecord:
    subject_id: int
    center_id: int
    age: float
    sex: int
    htn: int
    dm: int
    af: int
    smk: int
    hcl: int
    nihss: int
    p2p: float
    ivt: int
    reca: int
    mrs_3m: int
    icv: float
    features: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, SubjectRecord):
            return NotImplemented
        return all(getattr(self, c) == getattr(other, c) for c in CLINICAL_COLUMNS) and np.array_equal(
            self.features, other.features
        )

    @property
    def good_outcome(self) -> bool:
        return self.mrs_3m <= 2


def validate_record(rec: SubjectRecord) -> None:
    if not 18 <= rec.age <= 100:
        raise ValueError(f"age {rec.age} outside [18, 100]")
    if not 0 <= rec.mrs_3m <= 6:
        raise ValueError(f"mrs_3m {rec.mrs_3m} outside 0..6")
    if rec.nihss < 0:
        raise ValueError(f"nihss {rec.nihss} is negative")
    for name in BINARY_COLUMNS:
        if getattr(rec, name) not in (0, 1):
            raise ValueError(f"{name} must be 0 or 1, got {getattr(rec, name)}")
    if not (math.isfinite(rec.p2p) and rec.p2p >= 0):
        raise ValueError(f"p2p {rec.p2p} must be finite and >= 0")
    if not (math.isfinite(rec.icv) and rec.icv > 0):
        raise ValueError(f"icv {rec.icv} must be finite and positive")
    if not np.all(np.isfinite(rec.features)):
        raise ValueError("non-finite feature value")


@dataclass
class _Structure:
    vol_mean: np.ndarray
    vol_cv: np.ndarray
    vol_load: np.ndarray
    vol_noise: np.ndarray
    rad_mean: np.ndarray
    rad_sd: np.ndarray
    rad_lin: np.ndarray
    rad_quad: np.ndarray


def _draw_structure(rng, spec: CohortSpec) -> _Structure:
    nv, nr = spec.n_volume_features, spec.n_radiomic_features
    vol_mean = rng.uniform(2_000.0, 40_000.0, nv)
    vol_cv = rng.uniform(0.08, 0.15, nv)
    vol_load = rng.uniform(0.2, 0.7, nv) * rng.choice([-1.0, 1.0], nv)
    vol_noise = np.ones(nv)
    # the first volume is the strongly age-driven one (ventricle-like)
    vol_load[0] = 1.0
    vol_noise[0] = 0.25
    rad_sd = rng.uniform(0.5, 2.0, nr)
    rad_mean = rad_sd * rng.uniform(3.0, 10.0, nr)
    rad_lin = rng.normal(0.0, 0.35, nr)
    rad_quad = rng.normal(0.0, 0.15, nr)
    return _Structure(vol_mean, vol_cv, vol_load, vol_noise, rad_mean, rad_sd, rad_lin, rad_quad)


def _truncated_ages(rng, mean, sd, n):
    ages = rng.normal(mean, sd, n)
    bad = (ages < 18) | (ages > 100)
    while bad.any():
        ages[bad] = rng.normal(mean, sd, bad.sum())
        bad = (ages < 18) | (ages > 100)
    return ages


def generate_cohort_with_latent(spec: CohortSpec) -> tuple[list[SubjectRecord], np.ndarray]:
    """Generated records and the matching latent brain ages (years)."""
    rng = np.random.default_rng(spec.seed)
    st = _draw_structure(rng, spec)
    nv, nr = spec.n_volume_features, spec.n_radiomic_features
    vol_sd = st.vol_mean * st.vol_cv
    scale = np.exp(rng.normal(0.0, spec.site_scale_sd, (spec.n_centers, nv + nr)))
    shift = rng.normal(0.0, 1.0, (spec.n_centers, nv + nr)) * spec.site_shift_sd * np.concatenate([vol_sd, st.rad_sd])
    om = spec.outcome_model
    cuts = np.asarray(om["cutpoints"], dtype=float)
    noise = spec.feature_noise
    prev = {**_default_prevalence(), **spec.prevalence}

    records, latents = [], []
    sid = 0
    for c in range(spec.n_centers):
        n = int(spec.subjects_per_center[c])
        if n == 0:
            continue
        mean_age = spec.center_age_means[c] if spec.center_age_means else spec.age_mean
        age = _truncated_ages(rng, mean_age, spec.age_sd, n)
        pheno = {k: (rng.random(n) < prev[k]).astype(int) for k in PHENOTYPES}
        latent = age + spec.dm_feature_offset * pheno["dm"] + rng.normal(0.0, spec.latent_noise_sd, n)
        z = (latent - 70.0) / 15.0

        icv = ICV_REFERENCE * (1.0 + 0.07 * pheno["sex"] + noise * rng.normal(0.0, 0.06, n))
        icv_est = icv * (1.0 + noise * rng.normal(0.0, 0.01, n))
        e_vol = noise * rng.normal(0.0, 1.0, (n, nv)) * st.vol_noise
        vol = st.vol_mean * (1.0 + st.vol_cv * (z[:, None] * st.vol_load + e_vol))
        vol *= (icv / ICV_REFERENCE)[:, None]
        e_rad = noise * rng.normal(0.0, 1.0, (n, nr))
        rad = st.rad_mean + st.rad_sd * (z[:, None] * st.rad_lin + (z[:, None] ** 2 - 1.0) * st.rad_quad + e_rad)
        feats = np.hstack([vol, rad]) * scale[c] + shift[c]

        nihss = np.maximum(0, np.rint(rng.normal(spec.nihss_mean, spec.nihss_sd, n))).astype(int)
        p2p_med = spec.p2p_median[c] if len(spec.p2p_median) > 1 else spec.p2p_median[0]
        p2p = np.round(p2p_med * np.exp(rng.normal(0.0, 0.6, n)), 1)
        ivt = (rng.random(n) < prev["ivt"]).astype(int)
        reca = (rng.random(n) < prev["reca"]).astype(int)
        eta = (
            om["intercept"]
            + om["age"] * (age - 70.0)
            + om["nihss"] * (nihss - 16.0)
            + om["brain_aging"] * (latent - age)
            + om["ivt"] * ivt
            + om["reca"] * reca
            + om.get("p2p", 0.0) * (p2p - 140.0) / 60.0
        )
        severity = eta + rng.logistic(0.0, 1.0, n)
        mrs = (severity[:, None] > cuts[None, :]).sum(axis=1)

        for i in range(n):
            sid += 1
            rec = SubjectRecord(
                subject_id=sid,
                center_id=c + 1,
                age=float(age[i]),
                sex=int(pheno["sex"][i]),
                htn=int(pheno["htn"][i]),
                dm=int(pheno["dm"][i]),
                af=int(pheno["af"][i]),
                smk=int(pheno["smk"][i]),
                hcl=int(pheno["hcl"][i]),
                nihss=int(nihss[i]),
                p2p=float(p2p[i]),
                ivt=int(ivt[i]),
                reca=int(reca[i]),
                mrs_3m=int(mrs[i]),
                icv=float(icv_est[i]),
                features=feats[i].copy(),
            )
            validate_record(rec)
            records.append(rec)
        latents.append(latent)
    latent_all = np.concatenate(latents) if latents else np.zeros(0)
    return records, latent_all


def generate_cohort(spec: CohortSpec) -> list[SubjectRecord]:
    return generate_cohort_with_latent(spec)[0]


# -- array views ------------------------------------------------------------

def column(records, name: str) -> np.ndarray:
    return np.array([getattr(r, name) for r in records])


def feature_matrix(records) -> np.ndarray:
    if not records:
        return np.zeros((0, 0))
    return np.vstack([r.features for r in records])


def volume_features(records, n_volume: int) -> np.ndarray:
    """Volume-like block divided by the total intracranial volume column."""
    X = feature_matrix(records)[:, :n_volume]
    return X / column(records, "icv")[:, None]


def radiomic_features(records, n_volume: int) -> np.ndarray:
    return feature_matrix(records)[:, n_volume:]


# -- min-max normalization --------------------------------------------------

@dataclass
class NormStats:
    minimum: np.ndarray
    maximum: np.ndarray

    @classmethod
    def combine(cls, parts: list["NormStats"]) -> "NormStats":
        """Pooled statistics from per-site statistics (elementwise min / max)."""
        return cls(
            np.min([p.minimum for p in parts], axis=0),
            np.max([p.maximum for p in parts], axis=0),
        )


def fit_minmax(train) -> NormStats:
    X = np.atleast_2d(np.asarray(train, dtype=np.float64))
    if X.shape[0] == 0:
        raise ValueError("cannot fit min-max statistics on an empty set")
    return NormStats(X.min(axis=0), X.max(axis=0))


def apply_minmax(stats: NormStats, features) -> np.ndarray:
    """(x - min) / (max - min) per feature; constant training features map to 0."""
    X = np.asarray(features, dtype=np.float64)
    span = stats.maximum - stats.minimum
    safe = np.where(span > 0, span, 1.0)
    out = (X - stats.minimum) / safe
    return np.where(span > 0, out, 0.0)


# -- fold assignment --------------------------------------------------------

def stratified_center_kfold(cohort, k: int, seed: int) -> dict[int, int]:
    """Map subject_id -> fold, shuffling within each center and dealing round-robin.

    The dealing start rotates from center to center so that overall fold
    sizes stay balanced; per-center fold sizes differ by at most one.
    """
    if k < 2:
        raise ConfigError(f"k must be >= 2, got {k}")
    by_center: dict[int, list[int]] = {}
    for rec in cohort:
        by_center.setdefault(rec.center_id, []).append(rec.subject_id)
    assignment = {}
    offset = 0
    for center in sorted(by_center):
        ids = sorted(by_center[center])
        order = np.random.default_rng([int(seed), int(center)]).permutation(len(ids))
        for pos, idx in enumerate(order):
            assignment[ids[idx]] = (offset + pos) % k
        offset = (offset + len(ids)) % k
    return assignment


# -- CSV --------------------------------------------------------------------

def _format(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(int(value))


def write_cohort_csv(cohort, path) -> None:
    cohort = list(cohort)
    n_feat = cohort[0].features.size if cohort else 0
    header = list(CLINICAL_COLUMNS) + [f"f{j:03d}" for j in range(n_feat)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for rec in cohort:
            if rec.features.size != n_feat:
                raise ValueError(f"subject {rec.subject_id} has {rec.features.size} features, expected {n_feat}")
            row = [_format(getattr(rec, c)) for c in CLINICAL_COLUMNS]
            row += [repr(float(v)) for v in rec.features]
            writer.writerow(row)


def _parse(name, text, row):
    try:
        if name in INT_COLUMNS:
            return int(text)
        value = float(text)
    except ValueError:
        raise IngestionError(row, f"cannot parse {name}={text!r}") from None
    if not math.isfinite(value):
        raise IngestionError(row, f"{name} is not finite")
    return value


def load_cohort_csv(path) -> list[SubjectRecord]:
    """Read a cohort CSV; errors name the 1-based data row."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError(0, "file is empty (no header)") from None
        missing = [c for c in CLINICAL_COLUMNS if c not in header]
        if missing:
            raise IngestionError(0, f"missing columns {missing}")
        feat_cols = [h for h in header if h not in CLINICAL_COLUMNS]
        expected = [f"f{j:03d}" for j in range(len(feat_cols))]
        if feat_cols != expected:
            raise IngestionError(0, "feature columns must be f000..fNNN in order")
        pos = {h: i for i, h in enumerate(header)}
        records = []
        for row_no, row in enumerate(reader, start=1):
            if len(row) != len(header):
                raise IngestionError(row_no, f"{len(row)} fields, expected {len(header)}")
            values = {c: _parse(c, row[pos[c]], row_no) for c in CLINICAL_COLUMNS}
            feats = np.array([_parse("feature", row[pos[c]], row_no) for c in feat_cols], dtype=np.float64)
            rec = SubjectRecord(**values, features=feats)
            try:
                validate_record(rec)
            except ValueError as exc:
                raise IngestionError(row_no, str(exc)) from None
            records.append(rec)
    ids = [r.subject_id for r in records]
    if len(set(ids)) != len(ids):
        raise IngestionError(0, "duplicate subject_id values")
    return records
