import numpy as np
import pytest

from app.core.exceptions import DataError
from app.models.core_model import TrialDataset
from app.services.nuisance_regression import (
    GModel,
    fit_arm_models,
    fit_g,
    g_weights,
    residuals,
    weighted_least_squares,
)


class TestWeightedLeastSquares:

    def test_exact_recovery_without_noise(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(40, 3))
        y = 1.5 + X @ np.array([2.0, -1.0, 0.5])
        model = weighted_least_squares(X, y, rng.uniform(0.5, 2.0, size=40))

        assert model.intercept == pytest.approx(1.5)
        np.testing.assert_allclose(model.coefficients, [2.0, -1.0, 0.5], atol=1e-9)

    def test_unit_weights_match_ordinary_least_squares(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(30, 2))
        y = rng.normal(size=30)
        model = weighted_least_squares(X, y, np.ones(30))

        expected, *_ = np.linalg.lstsq(np.column_stack([np.ones(30), X]), y, rcond=None)
        assert model.intercept == pytest.approx(expected[0])
        np.testing.assert_allclose(model.coefficients, expected[1:], atol=1e-10)

    def test_rank_deficient_design_is_jittered(self):
        """Test duplicated columns still solve and fit the data"""
        rng = np.random.default_rng(3)
        x = rng.normal(size=25)
        X = np.column_stack([x, x])
        y = 2.0 * x + 1.0
        model = weighted_least_squares(X, y, np.ones(25))

        np.testing.assert_allclose(model.predict(X), y, atol=1e-5)

    def test_negative_weights(self):
        with pytest.raises(DataError, match="nonnegative"):
            weighted_least_squares(np.zeros((3, 1)), np.zeros(3), np.array([1.0, -1.0, 1.0]))

    def test_predict_dimension_check(self):
        with pytest.raises(DataError):
            GModel.zero(2).predict(np.zeros((3, 3)))


class TestGFunction:

    def test_weights_follow_propensity(self):
        data = TrialDataset(np.zeros((2, 1)), [1, -1], [0.0, 0.0], [0.25, 0.75])
        np.testing.assert_allclose(g_weights(data), [3.0, 1.0 / 3.0])

    def test_balanced_trial_is_unweighted_regression(self, make_dataset):
        data = make_dataset(n=50)
        model = fit_g(data, data.outcomes)
        reference = weighted_least_squares(data.covariates, data.outcomes, np.ones(50))

        np.testing.assert_allclose(model.coefficients, reference.coefficients)
        np.testing.assert_allclose(
            residuals(data, data.outcomes, model), data.outcomes - reference.predict(data.covariates)
        )

    def test_response_length_checked(self, make_dataset):
        data = make_dataset(n=10)
        with pytest.raises(DataError):
            fit_g(data, np.zeros(9))


@pytest.fixture
def uneven_trial() -> TrialDataset:
    """Trial with propensities varying across patients, so g weights differ"""
    rng = np.random.default_rng(17)
    n = 60
    X = rng.uniform(-1.0, 1.0, size=(n, 3))
    t = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    treated_share = rng.uniform(0.2, 0.8, size=n)
    r = 1.0 + 2.0 * X[:, 0] ** 2 + t * X[:, 1] + rng.standard_normal(n)
    return TrialDataset(X, t, r, np.where(t > 0, treated_share, 1.0 - treated_share))


class TestNormalEquations:

    def test_weighted_residuals_are_orthogonal_to_design(self, uneven_trial):
        data = uneven_trial
        delta = residuals(data, data.outcomes, fit_g(data, data.outcomes))
        w = g_weights(data)

        scale = np.sum(w * np.abs(data.outcomes))
        assert abs(np.sum(w * delta)) <= 1e-6 * scale
        np.testing.assert_allclose(data.covariates.T @ (w * delta), 0.0, atol=1e-6 * scale)

    def test_invariant_to_row_order(self, uneven_trial):
        data = uneven_trial
        order = np.random.default_rng(5).permutation(data.n)
        shuffled = data.subset(order)

        original = fit_g(data, data.outcomes)
        permuted = fit_g(shuffled, shuffled.outcomes)
        assert permuted.intercept == pytest.approx(original.intercept, abs=1e-8)
        np.testing.assert_allclose(permuted.coefficients, original.coefficients, atol=1e-8)

    def test_duplicated_rows_give_same_fit(self, uneven_trial):
        data = uneven_trial
        doubled = data.subset(np.tile(np.arange(data.n), 2))

        single = fit_g(data, data.outcomes)
        twice = fit_g(doubled, doubled.outcomes)
        assert twice.intercept == pytest.approx(single.intercept, abs=1e-8)
        np.testing.assert_allclose(twice.coefficients, single.coefficients, atol=1e-8)


class TestArmModels:

    def test_per_arm_fits(self):
        X = np.linspace(-1, 1, 20)[:, None]
        t = np.tile([1.0, -1.0], 10)
        r = np.where(t > 0, 1.0 + X[:, 0], -2.0 * X[:, 0])
        q_plus, q_minus = fit_arm_models(TrialDataset(X, t, r, np.full(20, 0.5)))

        assert q_plus.intercept == pytest.approx(1.0)
        assert q_minus.coefficients[0] == pytest.approx(-2.0)

    def test_empty_arm(self):
        data = TrialDataset(np.zeros((3, 1)), [1, 1, 1], [0.0, 1.0, 2.0], [0.5, 0.5, 0.5])
        with pytest.raises(DataError, match="no observations"):
            fit_arm_models(data)
