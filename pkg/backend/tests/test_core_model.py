import numpy as np
import pytest

from app.core.exceptions import DataError
from app.models.core_model import (
    KernelKind,
    KernelRule,
    KernelSpec,
    LinearRule,
    Standardizer,
    StudyPair,
    TrialDataset,
    predict_score,
    recommend,
)


class TestKernelSpec:

    def test_linear_rejects_bandwidth(self):
        """Test a linear kernel cannot carry a bandwidth"""
        with pytest.raises(DataError):
            KernelSpec(KernelKind.LINEAR, 1.0)

    @pytest.mark.parametrize("bandwidth", [0.0, -1.0, float("inf")])
    def test_rbf_rejects_bad_bandwidth(self, bandwidth):
        with pytest.raises(DataError):
            KernelSpec.rbf(bandwidth)

    def test_resolution(self):
        assert KernelSpec.linear().is_resolved
        assert KernelSpec.rbf(0.5).is_resolved
        assert not KernelSpec.rbf().is_resolved

    def test_kind_from_string(self):
        assert KernelSpec("rbf", 2.0).kind is KernelKind.RBF


class TestStandardizer:

    def test_fit_transform_centers_and_scales(self):
        X = np.array([[1.0, 10.0], [3.0, 30.0], [5.0, 50.0]])
        Z = Standardizer.fit(X).transform(X)

        assert Z.mean(axis=0) == pytest.approx([0.0, 0.0], abs=1e-12)
        assert Z.std(axis=0) == pytest.approx([1.0, 1.0])

    def test_constant_column_keeps_unit_scale(self):
        X = np.array([[1.0, 2.0], [1.0, 4.0]])
        standardizer = Standardizer.fit(X)

        assert standardizer.scale[0] == 1.0
        assert np.all(standardizer.transform(X)[:, 0] == 0.0)


class TestTrialDataset:

    def test_valid_dataset(self, make_dataset):
        data = make_dataset(n=20, p=4)
        assert (data.n, data.p) == (20, 4)
        assert not data.covariates.flags.writeable

    def test_rejects_bad_treatment_codes(self):
        with pytest.raises(DataError, match="treatments"):
            TrialDataset(np.zeros((2, 1)), [1, 0], [0.0, 1.0], [0.5, 0.5])

    @pytest.mark.parametrize("propensity", [0.0, 1.0, 1.5])
    def test_rejects_propensity_outside_unit_interval(self, propensity):
        with pytest.raises(DataError, match="propensities"):
            TrialDataset(np.zeros((2, 1)), [1, -1], [0.0, 1.0], [0.5, propensity])

    def test_rejects_length_mismatch(self):
        with pytest.raises(DataError):
            TrialDataset(np.zeros((3, 1)), [1, -1], [0.0, 1.0], [0.5, 0.5])

    def test_rejects_non_finite_values(self):
        with pytest.raises(DataError, match="non-finite"):
            TrialDataset(np.array([[np.nan], [0.0]]), [1, -1], [0.0, 1.0], [0.5, 0.5])

    def test_subset_keeps_rows_and_label(self, make_dataset):
        data = make_dataset(n=10, label="study2")
        part = data.subset([0, 3])

        assert part.n == 2
        assert part.study_label == "study2"
        np.testing.assert_array_equal(part.covariates, data.covariates[[0, 3]])

    def test_study_pair_requires_matching_columns(self, make_dataset):
        with pytest.raises(DataError, match="covariate counts"):
            StudyPair(make_dataset(p=3), make_dataset(p=4))

    def test_study_pair_other(self, make_dataset):
        first, second = make_dataset(seed=1), make_dataset(seed=2)
        pair = StudyPair(first, second)

        assert pair.other(1) is second
        assert pair.other(2) is first
        assert pair.p == 3


class TestDecisionRules:

    def test_zero_rule_recommends_shared_comparator(self):
        """Test a zero score maps to +1"""
        rule = LinearRule(np.zeros(3), 0.0)
        X = np.random.default_rng(0).normal(size=(25, 3))

        assert np.all(rule.recommendations(X) == 1)
        assert recommend(rule, X[0]) == 1

    def test_sign_of_first_covariate(self):
        rule = LinearRule([1.0, 0.0, 0.0])
        X = np.array([[0.5, 9.0, 9.0], [-0.5, 9.0, 9.0], [0.0, -9.0, -9.0]])

        np.testing.assert_array_equal(rule.recommendations(X), [1, -1, 1])

    def test_dimension_mismatch(self):
        rule = LinearRule([1.0, 2.0])
        with pytest.raises(DataError, match="Expected 2 covariates"):
            rule.scores(np.zeros((4, 3)))

    def test_predict_score_single_vector(self):
        rule = LinearRule([1.0, 2.0], intercept=0.5)
        assert predict_score(rule, np.array([1.0, 1.0])) == pytest.approx(3.5)

    def test_standardizer_applied_before_scoring(self):
        standardizer = Standardizer([1.0], [2.0])
        rule = LinearRule([1.0], standardizer=standardizer)

        assert rule.scores(np.array([[5.0]]))[0] == pytest.approx(2.0)

    def test_constant_rule(self):
        rule = LinearRule.constant(4, -1.0)
        assert np.all(rule.recommendations(np.ones((3, 4))) == -1)

    def test_kernel_rule_needs_resolved_bandwidth(self):
        with pytest.raises(DataError, match="resolved"):
            KernelRule(KernelSpec.rbf(), np.zeros((2, 1)), [1.0, 1.0])

    def test_kernel_rule_support_coefficient_mismatch(self):
        with pytest.raises(DataError, match="coefficients"):
            KernelRule(KernelSpec.rbf(1.0), np.zeros((2, 1)), [1.0])

    def test_kernel_rule_scores(self):
        rule = KernelRule(KernelSpec.rbf(1.0), [[0.0]], [2.0], intercept=-1.0)

        assert rule.scores(np.array([[0.0]]))[0] == pytest.approx(1.0)
        assert rule.scores(np.array([[1.0]]))[0] == pytest.approx(2.0 * np.exp(-1.0) - 1.0)
