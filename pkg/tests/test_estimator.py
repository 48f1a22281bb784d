import numpy as np
import pytest
from sklearn.base import clone

from gophen.estimator import SupervisedPCARegressor


def planted_data(rng, n=60, p=20, strong=3):
    """y driven by one feature block so the model has something to find."""
    x = rng.standard_normal((n, p))
    y = x[:, :strong].sum(axis=1) + 0.3 * rng.standard_normal(n)
    return x, y


def index_mapping(p, members):
    return {f"T{t}": list(range(t * members, (t + 1) * members))
            for t in range(p // members)}


class TestEstimatorAPI:
    def test_get_set_params_round_trip(self):
        est = SupervisedPCARegressor(stage="go_mid", threshold=0.3,
                                     n_components=4)
        params = est.get_params()
        assert params["stage"] == "go_mid"
        est2 = SupervisedPCARegressor().set_params(**params)
        assert est2.get_params() == params

    def test_clone_preserves_params(self):
        est = SupervisedPCARegressor(stage="go_start", threshold=0.2,
                                     mapping=index_mapping(20, 5))
        cloned = clone(est)
        assert cloned.get_params()["threshold"] == 0.2
        assert cloned.get_params()["mapping"] == est.mapping

    def test_fit_predict_shapes(self, rng):
        x, y = planted_data(rng)
        est = SupervisedPCARegressor(stage="go_end", threshold=0.2,
                                     n_components=3).fit(x, y)
        pred = est.predict(x)
        assert pred.shape == (60,)
        assert est.n_components_ <= 3
        assert not est.degenerate_

    def test_predict_before_fit_raises(self, rng):
        est = SupervisedPCARegressor()
        with pytest.raises(Exception):
            est.predict(rng.standard_normal((4, 3)))

    def test_feature_count_checked_at_predict(self, rng):
        x, y = planted_data(rng)
        est = SupervisedPCARegressor(stage="go_end", threshold=0.2).fit(x, y)
        with pytest.raises(ValueError, match="features"):
            est.predict(x[:, :5])

    @pytest.mark.parametrize("kwargs", [
        {"stage": "bad"},
        {"screen_stat": "anova"},
        {"family": "poisson"},
        {"screen_stat": "t_test", "family": "linear"},
        {"threshold": -0.1},
        {"n_components": 0},
    ])
    def test_param_validation(self, rng, kwargs):
        x, y = planted_data(rng)
        with pytest.raises(ValueError):
            SupervisedPCARegressor(**kwargs).fit(x, y)

    def test_mapping_required_for_term_stages(self, rng):
        x, y = planted_data(rng)
        with pytest.raises(ValueError, match="mapping"):
            SupervisedPCARegressor(stage="go_start").fit(x, y)


class TestEstimatorBehaviour:
    def test_degenerate_predicts_train_mean(self, rng):
        x, y = planted_data(rng)
        est = SupervisedPCARegressor(stage="go_end", threshold=2.0).fit(x, y)
        assert est.degenerate_
        np.testing.assert_allclose(est.predict(x), np.mean(y), atol=1e-12)

    def test_go_end_recovers_strong_feature(self, rng):
        x = rng.standard_normal((80, 10))
        y = 2.0 * x[:, 4] + 0.1 * rng.standard_normal(80)
        est = SupervisedPCARegressor(stage="go_end", threshold=0.5,
                                     n_components=2).fit(x, y)
        top = max(zip(est.coef_ids_, np.abs(est.coef_)), key=lambda t: t[1])
        assert top[0] == 4

    def test_go_start_prediction_quality(self, rng):
        x, y = planted_data(rng, n=100, p=20)
        mapping = index_mapping(20, 5)
        est = SupervisedPCARegressor(stage="go_start", threshold=0.1,
                                     n_components=4, mapping=mapping)
        est.fit(x[:70], y[:70])
        r = np.corrcoef(est.predict(x[70:]), y[70:])[0, 1]
        assert r > 0.5

    def test_logistic_predicts_probabilities(self, rng):
        x = rng.standard_normal((60, 8))
        y = (x[:, 0] + 0.5 * rng.standard_normal(60) > 0).astype(float)
        est = SupervisedPCARegressor(stage="go_end", family="logistic",
                                     threshold=0.2, n_components=2).fit(x, y)
        pred = est.predict(x)
        assert np.all((pred >= 0) & (pred <= 1))
        assert np.corrcoef(pred, y)[0, 1] > 0.4
