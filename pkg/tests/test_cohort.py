import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats as sps

from fedbrainage.cohort import (
    CohortSpec,
    NormStats,
    apply_minmax,
    column,
    feature_matrix,
    fit_minmax,
    generate_cohort,
    generate_cohort_with_latent,
    load_cohort_csv,
    stratified_center_kfold,
    volume_features,
    write_cohort_csv,
)
from fedbrainage.errors import ConfigError, IngestionError


@pytest.fixture(scope="module")
def default_cohort():
    return generate_cohort(CohortSpec(seed=3))


class TestGenerate:
    def test_default_total(self, default_cohort):
        assert len(default_cohort) == 1674
        counts = np.bincount(column(default_cohort, "center_id"))[1:]
        assert counts.tolist() == CohortSpec().subjects_per_center
        assert len({r.subject_id for r in default_cohort}) == 1674

    def test_marginals(self, default_cohort):
        age = column(default_cohort, "age")
        assert age.min() >= 18 and age.max() <= 100
        assert abs(age.mean() - 70.03) < 1.5
        assert abs(column(default_cohort, "dm").mean() - 0.21) < 0.04
        mrs = column(default_cohort, "mrs_3m")
        assert set(np.unique(mrs)) <= set(range(7))
        assert 0.2 < np.mean(mrs <= 2) < 0.8

    def test_noise_free_determinism(self):
        spec = CohortSpec(
            n_centers=2,
            subjects_per_center=[40, 40],
            p2p_median=[140.0],
            age_sd=0.0,
            latent_noise_sd=0.0,
            feature_noise=0.0,
            site_scale_sd=0.0,
            site_shift_sd=0.0,
            n_radiomic_features=8,
        )
        cohort = generate_cohort(spec)
        groups = {}
        for r in cohort:
            groups.setdefault((r.age, r.dm, r.sex), []).append(r.features)
        assert any(len(g) > 1 for g in groups.values())
        for feats in groups.values():
            for f in feats[1:]:
                np.testing.assert_array_equal(f, feats[0])

    def test_seed_reproducible(self):
        spec = CohortSpec(n_centers=2, subjects_per_center=[20, 10], p2p_median=[140.0], n_radiomic_features=4, seed=9)
        assert generate_cohort(spec) == generate_cohort(spec)

    def test_no_dm_offset_is_null(self):
        passes = 0
        for seed in range(10):
            spec = CohortSpec(dm_feature_offset=0.0, n_radiomic_features=8, seed=seed)
            cohort = generate_cohort(spec)
            vol = volume_features(cohort, spec.n_volume_features)[:, 0]
            dm = column(cohort, "dm") == 1
            passes += sps.ks_2samp(vol[dm], vol[~dm]).pvalue > 0.05
        assert passes >= 9

    def test_dm_offset_is_visible(self):
        spec = CohortSpec(dm_feature_offset=8.0, n_radiomic_features=8, seed=1)
        records, latent = generate_cohort_with_latent(spec)
        dm = column(records, "dm") == 1
        gap = latent - column(records, "age")
        assert gap[dm].mean() - gap[~dm].mean() == pytest.approx(8.0, abs=1.0)

    def test_primary_volume_tracks_age(self):
        spec = CohortSpec(
            n_centers=1, subjects_per_center=[1000], p2p_median=[140.0],
            site_scale_sd=0.0, site_shift_sd=0.0, n_radiomic_features=8, seed=2,
        )
        cohort = generate_cohort(spec)
        vol = volume_features(cohort, 32)[:, 0]
        assert sps.spearmanr(vol, column(cohort, "age")).statistic > 0.9

    def test_dm_latent_offset_within_2_se(self):
        spec = CohortSpec(dm_feature_offset=5.0, n_radiomic_features=8, seed=4)
        records, latent = generate_cohort_with_latent(spec)
        dm = column(records, "dm") == 1
        gap = latent - column(records, "age")
        se = np.sqrt(gap[dm].var(ddof=1) / dm.sum() + gap[~dm].var(ddof=1) / (~dm).sum())
        assert abs(gap[dm].mean() - gap[~dm].mean() - 5.0) < 2 * se

    def test_unknown_spec_key(self):
        with pytest.raises(ConfigError):
            CohortSpec.from_dict({"n_center": 3})

    def test_json_roundtrip(self):
        spec = CohortSpec(seed=5)
        assert CohortSpec.from_json(spec.to_json()) == spec


class TestMinMax:
    def test_midpoint(self):
        assert apply_minmax(fit_minmax([[0.0], [10.0]]), [[5.0]])[0, 0] == 0.5

    def test_constant_feature(self):
        out = apply_minmax(fit_minmax([[3.0, 1.0], [3.0, 2.0]]), [[3.0, 1.5], [7.0, 2.0]])
        np.testing.assert_array_equal(out[:, 0], [0.0, 0.0])

    def test_extrapolation(self):
        assert apply_minmax(fit_minmax([[0.0], [10.0]]), [[12.0]])[0, 0] == pytest.approx(1.2)

    @given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=30))
    def test_training_range_maps_to_unit_interval(self, values):
        X = np.array(values)[:, None]
        out = apply_minmax(fit_minmax(X), X)
        assert np.all(out >= 0) and np.all(out <= 1 + 1e-12)

    def test_combine_equals_pooled(self, rng):
        a, b = rng.normal(size=(10, 3)), rng.normal(size=(7, 3))
        pooled = fit_minmax(np.vstack([a, b]))
        combined = NormStats.combine([fit_minmax(a), fit_minmax(b)])
        np.testing.assert_array_equal(pooled.minimum, combined.minimum)
        np.testing.assert_array_equal(pooled.maximum, combined.maximum)


class _Rec:
    def __init__(self, sid, center):
        self.subject_id, self.center_id = sid, center


class TestFolds:
    def test_exact_division(self):
        folds = stratified_center_kfold([_Rec(i, 1) for i in range(10)], 5, 0)
        assert sorted(np.bincount(list(folds.values()))) == [2] * 5

    def test_remainder(self):
        folds = stratified_center_kfold([_Rec(i, 1) for i in range(11)], 5, 0)
        assert sorted(np.bincount(list(folds.values()))) == [2, 2, 2, 2, 3]

    def test_deterministic(self, default_cohort):
        assert stratified_center_kfold(default_cohort, 5, 4) == stratified_center_kfold(default_cohort, 5, 4)
        assert stratified_center_kfold(default_cohort, 5, 4) != stratified_center_kfold(default_cohort, 5, 5)

    def test_per_center_balance(self, default_cohort):
        folds = stratified_center_kfold(default_cohort, 5, 0)
        total = np.bincount(list(folds.values()))
        assert total.max() - total.min() <= 1
        for center in set(column(default_cohort, "center_id")):
            sizes = np.bincount([folds[r.subject_id] for r in default_cohort if r.center_id == center], minlength=5)
            assert sizes.max() - sizes.min() <= 1

    def test_invalid_k(self):
        with pytest.raises(ConfigError):
            stratified_center_kfold([_Rec(1, 1)], 1, 0)


class TestCsv:
    def test_roundtrip(self, tmp_path):
        spec = CohortSpec(n_centers=3, subjects_per_center=[50, 30, 20], p2p_median=[140.0], n_radiomic_features=12)
        cohort = generate_cohort(spec)
        write_cohort_csv(cohort, tmp_path / "c.csv")
        assert load_cohort_csv(tmp_path / "c.csv") == cohort

    def test_header_only(self, tmp_path):
        write_cohort_csv([], tmp_path / "e.csv")
        assert load_cohort_csv(tmp_path / "e.csv") == []

    def _write_and_edit(self, small_cohort, tmp_path, column_name, value):
        path = tmp_path / "c.csv"
        write_cohort_csv(small_cohort[:5], path)
        lines = path.read_text().splitlines()
        header = lines[0].split(",")
        row = lines[3].split(",")
        row[header.index(column_name)] = value
        lines[3] = ",".join(row)
        path.write_text("\n".join(lines) + "\n")
        return path

    def test_invalid_mrs_names_row(self, small_cohort, tmp_path):
        path = self._write_and_edit(small_cohort, tmp_path, "mrs_3m", "7")
        with pytest.raises(IngestionError) as info:
            load_cohort_csv(path)
        assert info.value.row == 3 and "mrs_3m" in str(info.value)

    def test_unparsable_value(self, small_cohort, tmp_path):
        path = self._write_and_edit(small_cohort, tmp_path, "age", "old")
        with pytest.raises(IngestionError) as info:
            load_cohort_csv(path)
        assert info.value.row == 3

    def test_missing_column(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("subject_id,center_id\n1,1\n")
        with pytest.raises(IngestionError, match="missing columns"):
            load_cohort_csv(path)

    def test_feature_matrix(self, small_cohort):
        X = feature_matrix(small_cohort)
        assert X.shape == (250, 32 + 16)
