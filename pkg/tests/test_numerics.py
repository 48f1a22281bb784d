import numpy as np
import pytest

from gophen.numerics import (
    DegenerateStatWarning,
    RankDeficiencyWarning,
    association_stat,
    column_association,
    fit_logistic_irls,
    fit_ols,
    pca_svd,
    pearson,
    standardize_columns,
    threshold_select,
)


class TestStandardize:
    def test_hand_column(self):
        std = standardize_columns(np.array([[1.0], [2.0], [3.0]]))
        np.testing.assert_allclose(std.values[:, 0], [-1.0, 0.0, 1.0],
                                   atol=1e-12)
        assert std.sds[0] == pytest.approx(1.0)

    def test_constant_column_flagged(self):
        std = standardize_columns(np.array([[5.0, 1.0], [5.0, 2.0], [5.0, 3.0]]))
        assert std.constant.tolist() == [True, False]
        np.testing.assert_array_equal(std.values[:, 0], 0.0)

    def test_idempotent(self, rng):
        x = rng.standard_normal((20, 4))
        once = standardize_columns(x)
        twice = standardize_columns(once.values)
        np.testing.assert_allclose(once.values, twice.values, atol=1e-12)

    def test_apply_matches_training_rule(self, rng):
        x = rng.standard_normal((12, 3))
        std = standardize_columns(x)
        np.testing.assert_array_equal(std.apply(x), std.values)


class TestPCA:
    def test_axis_aligned(self):
        m = np.array([[-1.0, 0.0], [0.0, 0.0], [1.0, 0.0]])
        basis = pca_svd(m, 1)
        np.testing.assert_allclose(np.abs(basis.loadings[:, 0]), [1.0, 0.0],
                                   atol=1e-12)
        assert basis.loadings[0, 0] > 0  # sign fixed positive

    def test_orthonormal_loadings(self, rng):
        for _ in range(5):
            m = rng.standard_normal((15, 8))
            basis = pca_svd(m, 8)
            gram = basis.loadings.T @ basis.loadings
            assert np.max(np.abs(gram - np.eye(basis.k))) <= 1e-10

    def test_score_variance_matches_covariance_eigenvalues(self, rng):
        m = rng.standard_normal((8, 5))
        basis = pca_svd(m, 5)
        scores = basis.transform(m)
        eig = np.sort(np.linalg.eigvalsh(np.cov(m.T)))[::-1][:basis.k]
        np.testing.assert_allclose(scores.var(axis=0, ddof=1),
                                   basis.singular_values ** 2 / 7, atol=1e-8)
        np.testing.assert_allclose(scores.var(axis=0, ddof=1), eig, atol=1e-8)

    def test_reconstruction_error_non_increasing(self, rng):
        m = rng.standard_normal((20, 12))
        centered = m - m.mean(axis=0)
        errors = []
        for k in range(1, 13):
            basis = pca_svd(m, k)
            approx = basis.transform(m) @ basis.loadings.T
            errors.append(np.linalg.norm(centered - approx))
        assert all(b <= a + 1e-10 for a, b in zip(errors, errors[1:]))

    def test_effective_k_capped_at_rank(self, rng):
        col = rng.standard_normal((10, 1))
        m = np.hstack([col, 2 * col, -col])  # rank 1 after centering
        basis = pca_svd(m, 3)
        assert basis.k == 1
        assert basis.requested_k == 3

    def test_k_below_one_rejected(self, rng):
        with pytest.raises(ValueError):
            pca_svd(rng.standard_normal((5, 3)), 0)


class TestOLS:
    def test_exact_single_column(self, rng):
        s = rng.standard_normal((15, 3))
        s -= s.mean(axis=0)
        fit = fit_ols(s, s[:, 0])
        np.testing.assert_allclose(fit.coefficients, [0.0, 1.0, 0.0, 0.0],
                                   atol=1e-10)

    def test_constant_response(self, rng):
        s = rng.standard_normal((10, 2))
        fit = fit_ols(s, np.full(10, 3.25))
        np.testing.assert_allclose(fit.coefficients, [3.25, 0.0, 0.0],
                                   atol=1e-10)

    def test_matches_normal_equations(self, rng):
        for _ in range(20):
            s = rng.standard_normal((20, 3))
            y = rng.standard_normal(20)
            fit = fit_ols(s, y)
            x = np.hstack([np.ones((20, 1)), s])
            beta = np.linalg.inv(x.T @ x) @ (x.T @ y)
            assert np.max(np.abs(fit.coefficients - beta)) <= 1e-8

    def test_residuals_orthogonal_to_design(self, rng):
        s = rng.standard_normal((30, 4))
        y = rng.standard_normal(30)
        fit = fit_ols(s, y)
        x = np.hstack([np.ones((30, 1)), s])
        resid = y - x @ fit.coefficients
        assert np.max(np.abs(x.T @ resid)) <= 1e-8

    def test_zero_column_dropped_with_warning(self, rng):
        s = rng.standard_normal((12, 2))
        y = rng.standard_normal(12)
        base = fit_ols(s, y)
        padded = np.hstack([s, np.zeros((12, 1))])
        with pytest.warns(RankDeficiencyWarning):
            fit = fit_ols(padded, y)
        assert fit.coefficients[3] == 0.0
        assert fit.dropped_columns == (3,)
        np.testing.assert_allclose(fit.coefficients[:3], base.coefficients,
                                   atol=1e-10)

    def test_too_few_rows(self, rng):
        with pytest.raises(ValueError):
            fit_ols(rng.standard_normal((4, 3)), rng.standard_normal(4))


def refining_grid_mle(x, y, levels=12, half=8.0):
    """Brute-force 2-D grid search for the logistic MLE, zooming in."""
    b0 = b1 = 0.0
    for _ in range(levels):
        c0 = np.linspace(b0 - half, b0 + half, 41)
        c1 = np.linspace(b1 - half, b1 + half, 41)
        g0, g1 = np.meshgrid(c0, c1, indexing="ij")
        eta = g0[..., None] + g1[..., None] * x[None, None, :]
        ll = np.sum(y * eta - np.logaddexp(0.0, eta), axis=-1)
        i, j = np.unravel_index(np.argmax(ll), ll.shape)
        b0, b1, half = c0[i], c1[j], half / 4.0
    return b0, b1


class TestLogisticIRLS:
    def test_null_model_with_zero_column(self):
        y = np.array([1.0, 0.0] * 15)
        with pytest.warns(RankDeficiencyWarning):
            fit = fit_logistic_irls(np.zeros((30, 1)), y)
        assert fit.converged
        assert fit.coefficients[0] == pytest.approx(0.0, abs=1e-8)
        assert fit.coefficients[1] == 0.0

    def test_matches_grid_search_mle(self):
        rng = np.random.default_rng(7)
        checked = 0
        while checked < 5:
            x = rng.standard_normal(30)
            p = 1.0 / (1.0 + np.exp(-(0.4 + 1.1 * x)))
            y = (rng.random(30) < p).astype(float)
            if y.min() == y.max():
                continue
            fit = fit_logistic_irls(x[:, None], y)
            if fit.separated:
                continue
            b0, b1 = refining_grid_mle(x, y)
            assert abs(fit.coefficients[0] - b0) <= 1e-3
            assert abs(fit.coefficients[1] - b1) <= 1e-3
            checked += 1

    def test_loglik_non_decreasing(self, rng):
        for _ in range(10):
            x = rng.standard_normal((25, 2))
            y = (rng.random(25) < 0.5).astype(float)
            if y.min() == y.max():
                continue
            fit = fit_logistic_irls(x, y)
            assert np.all(np.diff(fit.loglik_trace) >= -1e-12)

    def test_perfect_separation_flagged(self):
        x = np.array([-3.0, -2.0, -1.0, 1.0, 2.0, 3.0])
        y = np.array([0.0, 0.0, 0.0, 1.0, 1.0, 1.0])
        fit = fit_logistic_irls(x[:, None], y)
        assert fit.separated
        assert not fit.converged

    def test_gradient_matches_finite_differences(self, rng):
        x = rng.standard_normal((40, 2))
        eta_true = 0.5 * x[:, 0] - 0.25 * x[:, 1]
        y = (rng.random(40) < 1 / (1 + np.exp(-eta_true))).astype(float)
        fit = fit_logistic_irls(x, y)
        design = np.hstack([np.ones((40, 1)), x])

        def loglik(beta):
            eta = design @ beta
            return np.sum(y * eta - np.logaddexp(0.0, eta))

        beta = fit.coefficients
        h = 1e-6
        for j in range(3):
            e = np.zeros(3)
            e[j] = h
            numeric = (loglik(beta + e) - loglik(beta - e)) / (2 * h)
            analytic = design[:, j] @ (y - 1 / (1 + np.exp(-design @ beta)))
            assert abs(numeric - analytic) <= 1e-5 * max(1.0, abs(analytic))

    def test_one_class_rejected(self):
        with pytest.raises(ValueError):
            fit_logistic_irls(np.zeros((6, 1)), np.ones(6))


class TestAssociation:
    def test_pearson_self_is_one(self, rng):
        y = rng.standard_normal(20)
        assert association_stat(y, y, "pearson") == 1.0
        assert association_stat(-y, y, "pearson") == -1.0

    def test_pearson_affine_invariance(self, rng):
        x = rng.standard_normal(25)
        y = rng.standard_normal(25)
        base = association_stat(x, y, "pearson")
        shifted = association_stat(3.0 * x + 1.0, 0.5 * y - 2.0, "pearson")
        assert shifted == pytest.approx(base, abs=1e-12)

    def test_pooled_t_hand_oracle(self):
        x = np.array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
        y = np.array([0.0, 0.0, 0.0, 1.0, 1.0, 1.0])
        # means 2 and 5, pooled sd 1, t = 3 / sqrt(2/3)
        expected = 3.0 / np.sqrt(2.0 / 3.0)
        assert association_stat(x, y, "t_test") == pytest.approx(
            expected, abs=1e-10)

    def test_constant_feature_flagged_zero(self):
        with pytest.warns(DegenerateStatWarning):
            value = association_stat(np.full(6, 2.0),
                                     np.arange(6.0), "pearson")
        assert value == 0.0

    def test_t_test_needs_two_per_class(self):
        with pytest.raises(ValueError):
            association_stat(np.arange(5.0),
                             np.array([1.0, 0.0, 0.0, 0.0, 0.0]), "t_test")

    def test_threshold_select_excludes_constants(self, rng):
        x = np.hstack([rng.standard_normal((10, 2)), np.ones((10, 1))])
        y = rng.standard_normal(10)
        vals, const = column_association(x, y)
        picked = threshold_select(vals, const, "pearson", 0.0)
        assert 2 not in picked.tolist()
        assert set(picked.tolist()) <= {0, 1}

    def test_pearson_helper_constant_warns(self):
        with pytest.warns(DegenerateStatWarning):
            assert pearson(np.ones(5), np.arange(5.0)) == 0.0
