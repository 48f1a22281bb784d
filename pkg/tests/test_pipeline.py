import numpy as np
import pytest

from gophen.data import Dataset, InputError, TermMapping, make_folds
from gophen.estimator import SupervisedPCARegressor
from gophen.pipeline import (
    CVResult,
    ModelSpec,
    build_grid,
    default_components,
    default_thresholds,
    fit_fold,
    grid_search,
    parse_float_list,
    parse_int_list,
    parse_key_value_config,
    run_cv,
    screen_features,
    threshold_classify,
)
from gophen.synth import SynthConfig, generate_synthetic
from tests.conftest import block_mapping, identity_mapping, small_dataset


def spec(stage="go_start", threshold=0.2, k=2, family="linear",
         stat="pearson", phenotype="pheno_1"):
    return ModelSpec(stage, stat, threshold, k, family, phenotype)


class TestModelSpec:
    @pytest.mark.parametrize("kwargs", [
        {"stage": "nowhere"},
        {"threshold": 0.0},
        {"k": 0},
        {"stat": "t_test", "family": "linear"},
        {"family": "gamma"},
    ])
    def test_invalid_specs(self, kwargs):
        with pytest.raises(ValueError):
            spec(**kwargs)

    def test_t_test_with_logistic_is_valid(self):
        spec(stat="t_test", family="logistic", threshold=1.5)


class TestScreening:
    def test_threshold_zero_selects_all_non_constant(self, rng):
        x = np.hstack([rng.standard_normal((15, 3)), np.full((15, 1), 2.0)])
        y = rng.standard_normal(15)
        assert screen_features(x, y, "pearson", 0.0).tolist() == [0, 1, 2]

    def test_exact_column_selected_at_high_threshold(self, rng):
        x = rng.standard_normal((20, 5))
        y = x[:, 3].copy()
        picked = screen_features(x, y, "pearson", 0.99)
        assert 3 in picked.tolist()

    def test_matches_per_column_oracle(self, rng):
        x = rng.standard_normal((20, 10))
        y = rng.standard_normal(20)
        picked = screen_features(x, y, "pearson", 0.3)
        expected = [j for j in range(10)
                    if abs(np.corrcoef(x[:, j], y)[0, 1]) >= 0.3]
        assert picked.tolist() == expected

    def test_empty_selection_is_not_an_error(self, rng):
        x = rng.standard_normal((15, 4))
        y = rng.standard_normal(15)
        assert screen_features(x, y, "pearson", 0.9999).size == 0


class TestFitFold:
    def test_planted_exact_signal(self, rng):
        ds = small_dataset(rng, n=30, p=8)
        mapping = block_mapping(ds.feature_ids, 4)
        train = np.arange(20)
        # y on the training block equals term T0's aggregated column
        from gophen.terms import aggregate_term_expression
        sub = Dataset(ds.subject_ids[:20], ds.feature_ids,
                      ds.expression[:20])
        agg = aggregate_term_expression(sub, mapping)
        y = np.zeros(30)
        y[:20] = agg.values[:, 0]
        ds2 = Dataset(ds.subject_ids, ds.feature_ids, ds.expression,
                      {"pheno_1": y})
        ff = fit_fold(ds2, mapping, spec(threshold=0.5, k=1), train)
        assert ff.selected_ids == ("T0",)
        est = SupervisedPCARegressor(
            stage="go_start", threshold=0.5, n_components=1,
            mapping={"T0": [0, 1, 2, 3], "T1": [4, 5, 6, 7]})
        est.fit(ds.expression[:20], y[:20])
        fitted = est.predict(ds.expression[:20])
        ss_res = np.sum((y[:20] - fitted) ** 2)
        ss_tot = np.sum((y[:20] - y[:20].mean()) ** 2)
        assert 1.0 - ss_res / ss_tot >= 0.99

    def test_degenerate_fold_predicts_train_mean(self, rng):
        ds = small_dataset(rng, n=20, p=6)
        mapping = block_mapping(ds.feature_ids, 3)
        ff = fit_fold(ds, mapping,
                      spec(threshold=0.999999, phenotype="y"), np.arange(14))
        assert ff.degenerate
        assert ff.train_mean == pytest.approx(
            float(ds.phenotypes["y"][:14].mean()))


class TestRunCV:
    def test_identity_mapping_stage_equivalence(self, rng):
        ds = small_dataset(rng, n=30, p=12)
        mapping = identity_mapping(ds.feature_ids)
        folds = make_folds(30, 5, 3)
        for thr, k in [(0.1, 2), (0.25, 3), (0.4, 1)]:
            a = run_cv(ds, mapping, spec(stage="go_start", threshold=thr,
                                         k=k, phenotype="y"), folds)
            b = run_cv(ds, mapping, spec(stage="go_end", threshold=thr,
                                         k=k, phenotype="y"), folds)
            assert np.array_equal(a.oof_predictions, b.oof_predictions)
            assert a.predictive_correlation == b.predictive_correlation

    def test_held_out_rows_never_influence_training(self, rng):
        cfg = SynthConfig(n_subjects=30, n_features=40, n_terms=8,
                          members_per_term=5, n_planted_terms=2, seed=5)
        res = generate_synthetic(cfg)
        ds = res.dataset
        folds = make_folds(30, 5, 1)
        mspec = spec(threshold=0.15, k=2)
        for fold in (1, 4):
            train = folds.train_indices(fold)
            test = folds.test_indices(fold)
            noisy = ds.expression.copy()
            noisy[test] = rng.standard_normal((test.size, ds.n_features)) * 9.0
            ds2 = Dataset(ds.subject_ids, ds.feature_ids, noisy,
                          ds.phenotypes, ds.binary_labels)
            ff1 = fit_fold(ds, res.mapping, mspec, train)
            ff2 = fit_fold(ds2, res.mapping, mspec, train)
            assert ff1.selected_ids == ff2.selected_ids
            assert np.array_equal(ff1.basis.loadings, ff2.basis.loadings)
            assert np.array_equal(ff1.regression.coefficients,
                                  ff2.regression.coefficients)

    def test_strong_single_term_signal(self):
        cfg = SynthConfig(n_subjects=100, n_features=100, n_terms=10,
                          members_per_term=10, n_planted_terms=1,
                          noise_sd=0.0, latent_loading=0.9, seed=2)
        res = generate_synthetic(cfg)
        folds = make_folds(100, 5, 2)
        result = run_cv(res.dataset, res.mapping,
                        spec(threshold=0.3, k=2), folds)
        assert result.predictive_correlation >= 0.9

    def test_null_phenotype_correlations_are_small(self):
        # permutation-null behaviour: centered near 0, mostly within 0.25
        rs = []
        for seed in range(20):
            cfg = SynthConfig(n_subjects=80, n_features=100, n_terms=20,
                              members_per_term=5, n_planted_terms=0,
                              noise_sd=1.0, seed=seed)
            res = generate_synthetic(cfg)
            folds = make_folds(80, 5, seed)
            result = run_cv(res.dataset, res.mapping,
                            spec(threshold=0.1, k=3), folds)
            rs.append(result.predictive_correlation)
        rs = np.asarray(rs)
        assert abs(np.median(rs)) < 0.1
        assert np.mean(np.abs(rs) < 0.25) >= 0.9
        assert np.max(np.abs(rs)) < 0.4

    def test_consolidation_matches_fold_average_oracle(self, rng):
        cfg = SynthConfig(n_subjects=40, n_features=60, n_terms=12,
                          members_per_term=5, n_planted_terms=3, seed=9)
        res = generate_synthetic(cfg)
        folds = make_folds(40, 4, 0)
        result = run_cv(res.dataset, res.mapping, spec(threshold=0.15, k=2),
                        folds, keep_fold_fits=True)
        universe = result.consolidated_term_coefs.term_ids
        index = {t: i for i, t in enumerate(universe)}
        total = np.zeros(len(universe))
        for ff in result.fold_fits:
            for term, value in zip(ff.coef_ids, ff.coef_values):
                total[index[term]] += value
        np.testing.assert_allclose(result.consolidated_term_coefs.coefficients,
                                   total / folds.k, atol=1e-14)

    def test_predictive_correlation_affine_invariant(self, rng):
        ds = small_dataset(rng, n=30, p=10,
                           phenotype=rng.standard_normal(30))
        scaled = Dataset(ds.subject_ids, ds.feature_ids, ds.expression,
                         {"y": 5.0 * ds.phenotypes["y"] + 7.0})
        mapping = block_mapping(ds.feature_ids, 2)
        folds = make_folds(30, 5, 8)
        a = run_cv(ds, mapping, spec(threshold=0.1, k=2, phenotype="y"), folds)
        b = run_cv(scaled, mapping, spec(threshold=0.1, k=2, phenotype="y"),
                   folds)
        assert b.predictive_correlation == pytest.approx(
            a.predictive_correlation, abs=1e-10)

    def test_logistic_family_uses_labels(self, rng):
        cfg = SynthConfig(n_subjects=50, n_features=40, n_terms=8,
                          members_per_term=5, n_planted_terms=2,
                          binary_overlap=0.1, seed=12)
        res = generate_synthetic(cfg)
        folds = make_folds(50, 5, 0)
        result = run_cv(res.dataset, res.mapping,
                        spec(threshold=0.15, k=2, family="logistic"), folds)
        assert np.all((result.oof_predictions >= 0)
                      & (result.oof_predictions <= 1))

    def test_logistic_without_labels_is_an_error(self, rng):
        ds = small_dataset(rng, n=20, p=6)
        mapping = block_mapping(ds.feature_ids, 3)
        folds = make_folds(20, 4, 0)
        with pytest.raises(InputError, match="labels"):
            run_cv(ds, mapping, spec(family="logistic", phenotype="y"), folds)

    def test_unknown_phenotype_is_an_error(self, rng):
        ds = small_dataset(rng, n=20, p=6)
        folds = make_folds(20, 4, 0)
        with pytest.raises(InputError, match="nope"):
            run_cv(ds, block_mapping(ds.feature_ids, 3),
                   spec(phenotype="nope"), folds)


class TestGridSearch:
    def test_default_grid_has_1026_cells(self):
        grid = build_grid("go_start", "pheno_1")
        assert len(grid) == 1026
        assert len(default_thresholds()) == 19
        assert len(default_components()) == 54

    def test_singleton_grid_equals_run_cv(self, rng):
        cfg = SynthConfig(n_subjects=30, n_features=40, n_terms=8,
                          members_per_term=5, n_planted_terms=2, seed=6)
        res = generate_synthetic(cfg)
        folds = make_folds(30, 5, 4)
        mspec = spec(threshold=0.2, k=2)
        from_grid = grid_search(res.dataset, res.mapping, [mspec], folds)[0]
        direct = run_cv(res.dataset, res.mapping, mspec, folds)
        assert np.array_equal(from_grid.oof_predictions,
                              direct.oof_predictions)
        assert from_grid.predictive_correlation == direct.predictive_correlation
        np.testing.assert_array_equal(
            from_grid.consolidated_term_coefs.coefficients,
            direct.consolidated_term_coefs.coefficients)

    def test_grid_results_match_independent_run_cv(self, rng):
        cfg = SynthConfig(n_subjects=30, n_features=40, n_terms=8,
                          members_per_term=5, n_planted_terms=2, seed=6)
        res = generate_synthetic(cfg)
        folds = make_folds(30, 5, 4)
        grid = [spec(stage=s, threshold=t, k=k)
                for s in ("go_start", "go_mid", "go_end")
                for t in (0.1, 0.3) for k in (1, 3)]
        results = grid_search(res.dataset, res.mapping, grid, folds)
        for mspec, result in zip(grid, results):
            direct = run_cv(res.dataset, res.mapping, mspec, folds)
            assert np.array_equal(result.oof_predictions,
                                  direct.oof_predictions)

    def test_rerun_is_bit_identical(self, rng):
        cfg = SynthConfig(n_subjects=30, n_features=40, n_terms=8,
                          members_per_term=5, n_planted_terms=2, seed=6)
        res = generate_synthetic(cfg)
        folds = make_folds(30, 5, 4)
        grid = build_grid("go_start", "pheno_1", thresholds=[0.1, 0.2],
                          components=[1, 2, 3])
        a = grid_search(res.dataset, res.mapping, grid, folds)
        b = grid_search(res.dataset, res.mapping, grid, folds)
        assert [r.predictive_correlation for r in a] == \
            [r.predictive_correlation for r in b]

    def test_empty_grid_rejected(self, rng):
        ds = small_dataset(rng)
        with pytest.raises(ValueError):
            grid_search(ds, None, [], make_folds(ds.n_subjects, 4, 0))

    def test_fold_fits_trimmed_by_default(self, rng):
        cfg = SynthConfig(n_subjects=30, n_features=40, n_terms=8,
                          members_per_term=5, n_planted_terms=2, seed=6)
        res = generate_synthetic(cfg)
        folds = make_folds(30, 5, 4)
        trimmed = grid_search(res.dataset, res.mapping, [spec()], folds)[0]
        kept = grid_search(res.dataset, res.mapping, [spec()], folds,
                           keep_fold_fits=True)[0]
        assert trimmed.fold_fits == ()
        assert len(kept.fold_fits) == 5


class TestThresholdClassify:
    def test_separable(self):
        acc = threshold_classify(np.array([1.0, 2.0, 9.0, 10.0]),
                                 np.array(["NF", "NF", "CFS", "CFS"]))
        assert acc == 1.0

    def test_independent_labels_reach_majority(self, rng):
        preds = rng.standard_normal(400)
        labels = np.where(rng.random(400) < 0.6, "CFS", "NF")
        majority = max(np.mean(labels == "CFS"), np.mean(labels == "NF"))
        acc = threshold_classify(preds, labels)
        assert majority <= acc <= majority + 0.08

    def test_fixed_cutoff(self):
        preds = np.array([0.1, 0.4, 0.6, 0.9])
        labels = np.array(["NF", "NF", "CFS", "CFS"])
        assert threshold_classify(preds, labels, 0.5) == 1.0
        assert threshold_classify(preds, labels, 0.95) == 0.5

    def test_one_class_rejected(self):
        with pytest.raises(InputError):
            threshold_classify(np.array([1.0, 2.0]), np.array(["CFS", "CFS"]))

    def test_true_phenotype_imperfectly_encodes_labels(self):
        cfg = SynthConfig(n_subjects=80, n_features=50, n_terms=10,
                          members_per_term=5, n_planted_terms=2,
                          binary_overlap=0.3, seed=21)
        res = generate_synthetic(cfg)
        acc = threshold_classify(res.dataset.phenotypes["pheno_1"],
                                 res.dataset.binary_labels)
        assert 0.6 <= acc < 1.0

    def test_perfectly_separable_construction(self):
        cfg = SynthConfig(n_subjects=40, n_features=50, n_terms=10,
                          members_per_term=5, n_planted_terms=2,
                          binary_overlap=0.0, seed=22)
        res = generate_synthetic(cfg)
        acc = threshold_classify(res.dataset.phenotypes["pheno_1"],
                                 res.dataset.binary_labels)
        assert acc == 1.0


class TestConfigParsing:
    def test_key_value_file(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("a = 1\n# comment\nb = x,y # trailing\n\n",
                        encoding="utf-8")
        assert parse_key_value_config(path) == {"a": "1", "b": "x,y"}

    def test_malformed_line(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("oops\n", encoding="utf-8")
        with pytest.raises(InputError, match=":1"):
            parse_key_value_config(path)

    def test_int_range(self):
        assert parse_int_list("1..5") == [1, 2, 3, 4, 5]
        assert parse_int_list("3, 7") == [3, 7]

    def test_float_lists(self):
        assert parse_float_list("0.1, 0.2") == [0.1, 0.2]
        assert len(parse_float_list("default")) == 19
