import json

import numpy as np
import pytest

from fedbrainage.brainage import PredictionRecord, correct_brainage_cv
from fedbrainage.cohort import CohortSpec, column, generate_cohort
from fedbrainage.errors import ConfigError, PairingError
from fedbrainage.harness.analysis import (
    compare_errors,
    is_good_outcome,
    outcome_analysis,
    outcome_design,
    phenotype_analysis,
)
from fedbrainage.harness.experiment import (
    ExperimentConfig,
    ProtocolData,
    ProtocolRunner,
    reference_center,
    run_training_protocol,
)
from fedbrainage.harness.report import build_report, prediction_path, read_table
from fedbrainage.brainage import write_predictions_csv


def _cfg(**kw):
    base = dict(families=["vol_simple"], epochs=10, tune_l2=False, hidden=[8, 4], seeds=[0])
    base.update(kw)
    return ExperimentConfig(**base)


@pytest.fixture(scope="module")
def runner(small_cohort):
    return ProtocolRunner(_cfg(), small_cohort)


class TestProtocol:
    def test_reference_is_largest_center(self, small_cohort):
        assert reference_center(_cfg(), small_cohort) == 1
        assert reference_center(_cfg(reference_center=3), small_cohort) == 3
        with pytest.raises(ConfigError):
            reference_center(_cfg(reference_center=9), small_cohort)

    def test_single_site_two_centers(self):
        cohort = generate_cohort(CohortSpec(n_centers=2, subjects_per_center=[60, 25], p2p_median=[140.0], n_radiomic_features=4))
        recs = run_training_protocol(_cfg(), cohort, "vol_simple", "single_site")
        assert sorted(r.subject_id for r in recs) == [r.subject_id for r in cohort if r.center_id == 2]

    def test_folds_partition_test_set(self, small_cohort):
        data = ProtocolData(_cfg(), small_cohort)
        folds = data.fold_of(0)
        test_ids = set(data.ids[~data.is_ref].tolist())
        held = [set(data.ids[folds == f].tolist()) for f in range(5)]
        assert set().union(*held) == test_ids
        assert sum(len(h) for h in held) == len(test_ids)
        assert np.all(folds[data.is_ref] == -1)

    @pytest.mark.parametrize("configuration", ["centralized", "federated", "single_site"])
    def test_every_test_subject_once(self, runner, small_cohort, configuration):
        recs = runner.run("vol_simple", configuration, 0)
        ref_ids = {r.subject_id for r in small_cohort if r.center_id == 1}
        ids = [r.subject_id for r in recs]
        assert len(ids) == len(set(ids)) == len(small_cohort) - len(ref_ids)
        assert not ref_ids & set(ids)

    def test_federated_uses_every_training_center(self, runner):
        plan = runner.federation_plan("vol_simple", 0, 2, runner.data.fold_data("vol_simple", 0, 2))
        assert plan.client_ids == [1, 2, 3, 4]
        assert plan.meta == {"family": "vol_simple", "seed": 0, "fold": 2, "l2_penalty": 0.0}

    def test_training_normalization_only(self, runner):
        fd = runner.data.fold_data("vol_simple", 0, 0)
        assert fd.X_train.min() == 0.0 and fd.X_train.max() == 1.0
        assert fd.X_train.shape[1] == 32

    def test_augmented_inputs(self, small_cohort):
        fd = ProtocolData(_cfg(families=["vol_augmented"]), small_cohort).fold_data("vol_augmented", 0, 0)
        assert fd.X_train.shape[1] == 560

    def test_feedforward_runs(self, small_cohort):
        recs = ProtocolRunner(_cfg(families=["feedforward"], epochs=2), small_cohort).run("feedforward", "federated", 0)
        assert all(np.isfinite(r.predicted_age) for r in recs)

    def test_deterministic(self, small_cohort):
        a = ProtocolRunner(_cfg(), small_cohort).run("vol_simple", "centralized", 1)
        b = ProtocolRunner(_cfg(), small_cohort).run("vol_simple", "centralized", 1)
        assert [r.predicted_age for r in a] == [r.predicted_age for r in b]


class TestConfig:
    @pytest.mark.parametrize(
        "data,path",
        [
            ({"families": ["cnn"]}, "config.families[0]"),
            ({"seeds": [-1]}, "config.seeds"),
            ({"rounds": {"vol_simple": 0}}, "config.rounds.vol_simple"),
            ({"cohort": {"generate": {"n_center": 2}}}, "config.cohort.generate"),
            ({"epoch": 3}, "config"),
        ],
    )
    def test_schema_addressed(self, data, path):
        with pytest.raises(ConfigError, match=path.replace("[", r"\[").replace("]", r"\]")):
            ExperimentConfig.from_dict(data)

    def test_budgets(self):
        cfg = ExperimentConfig(epochs=50, rounds={"feedforward": 20})
        assert cfg.budget == 50 and cfg.rounds_for("vol_simple") == 50 and cfg.rounds_for("feedforward") == 20
        assert ExperimentConfig(paper_budget=True).budget == 1000

    def test_json_file(self, tmp_path):
        (tmp_path / "c.json").write_text(json.dumps({"families": ["vol_simple"], "epochs": 5}))
        assert ExperimentConfig.from_json_file(tmp_path / "c.json").epochs == 5


def _recs(errors, ages=None):
    ages = np.linspace(30, 90, len(errors)) if ages is None else ages
    return [PredictionRecord(i, float(a), float(a + e)) for i, (a, e) in enumerate(zip(ages, errors))]


class TestCompareErrors:
    def test_identical_sets(self):
        recs = _recs(np.sin(np.arange(30.0)))
        tests, summary = compare_errors({"centralized": recs, "federated": recs})
        res = tests[("centralized", "federated")]
        assert res.p_value == 1.0 and res.extra["note"] == "no difference"
        assert summary["centralized"] == summary["federated"]

    def test_planted_extra_noise(self):
        rng = np.random.default_rng(0)
        base = rng.normal(0, 5, 1000)
        tests, _ = compare_errors({"centralized": _recs(base), "single_site": _recs(base + rng.normal(0, 2, 1000) * np.sign(base))})
        assert tests[("centralized", "single_site")].p_value < 0.001

    def test_subject_mismatch(self):
        with pytest.raises(PairingError):
            compare_errors({"centralized": _recs([1.0, 2.0, 3.0]), "federated": _recs([1.0, 2.0])})


def test_mrs_cutoff():
    assert is_good_outcome(2) and not is_good_outcome(3)


def _filled(records):
    return correct_brainage_cv(records, 10, 0)


class TestPhenotypeAndOutcome:
    def test_zero_prevalence_skipped(self):
        spec = CohortSpec(n_centers=1, subjects_per_center=[200], p2p_median=[140.0], n_radiomic_features=4, prevalence={"dm": 0.0})
        cohort = generate_cohort(spec)
        recs = _filled([PredictionRecord(r.subject_id, r.age, r.age + np.sin(r.age)) for r in cohort])
        rows = phenotype_analysis(recs, cohort)
        dm = [r for r in rows if r["phenotype"] == "dm"]
        assert dm and all(r["status"] == "skipped" for r in dm)
        assert all(r["status"] == "ok" for r in rows if r["phenotype"] == "sex")

    def test_planted_dm_gap_detected(self):
        from fedbrainage.cohort import generate_cohort_with_latent

        cohort, latent = generate_cohort_with_latent(CohortSpec(n_centers=1, subjects_per_center=[600], p2p_median=[140.0], n_radiomic_features=4, seed=3))
        ages = column(cohort, "age")
        recs = _filled([PredictionRecord(r.subject_id, a, l) for r, a, l in zip(cohort, ages, latent)])
        row = next(r for r in phenotype_analysis(recs, cohort) if r["phenotype"] == "dm" and r["variable"] == "brainage")
        assert row["effect"] == "higher" and row["p_value"] < 0.05

    def test_zeroed_brainage_is_null(self, small_cohort):
        recs = [PredictionRecord(r.subject_id, r.age, r.age) for r in small_cohort]
        for r in recs:
            r.brainage = 0.0
        oa = outcome_analysis(recs, small_cohort)
        row = next(r for r in oa.odds_ratios if r["predictor"] == "brainage")
        assert row["ci_lower"] <= 1.0 <= row["ci_upper"]

    def test_outcome_design_columns(self, small_cohort):
        recs = _filled([PredictionRecord(r.subject_id, r.age, r.age + 1.0) for r in small_cohort])
        X, y, names = outcome_design(recs, small_cohort)
        assert names[:3] == ["intercept", "brainage", "age"] and X.shape == (250, 13)
        assert y.sum() == sum(r.mrs_3m <= 2 for r in small_cohort)


def test_report_bundle(tmp_path, small_cohort):
    cfg = _cfg(configurations=["centralized", "single_site"], output_dir=str(tmp_path))
    runner = ProtocolRunner(cfg, small_cohort)
    for conf in cfg.configurations:
        path = prediction_path(tmp_path, "vol_simple", conf, 0)
        path.parent.mkdir(parents=True, exist_ok=True)
        write_predictions_csv(runner.run("vol_simple", conf, 0), path)
    bundle = build_report(cfg, tmp_path, small_cohort)
    names = {p.name for p in bundle.files}
    assert {"report.md", "errors_by_configuration.csv", "odds_ratios.csv", "phenotype_comparisons.csv"} <= names
    # emitted statistics can be re-derived from the per-subject CSVs
    from fedbrainage.brainage import read_predictions_csv
    from fedbrainage.stats import wilcoxon_signed_rank

    preds = {c: read_predictions_csv(prediction_path(tmp_path, "vol_simple", c, 0)) for c in cfg.configurations}
    diffs = [abs(a.pad) - abs(b.pad) for a, b in zip(preds["centralized"], preds["single_site"])]
    (test_row,) = read_table(tmp_path / "tables" / "error_tests.csv")
    assert float(test_row["p_value"]) == wilcoxon_signed_rank(diffs).p_value
    or_rows = [r for r in read_table(tmp_path / "tables" / "odds_ratios.csv")
               if r["configuration"] == "centralized" and r["predictor"] == "brainage" and r["standardized"] == "0"]
    refit = outcome_analysis(preds["centralized"], small_cohort).fit.row("brainage")
    assert float(or_rows[0]["odds_ratio"]) == refit["odds_ratio"]
    errors = read_table(tmp_path / "tables" / "errors_by_configuration.csv")
    assert errors[0]["federated_mean"] == ""
    assert "Absolute age prediction errors" in (tmp_path / "report.md").read_text()
