import json

import numpy as np
import pytest
from pydantic import ValidationError

from app.core.exceptions import DataError
from app.models.core_model import KernelSpec, LinearRule, Standardizer
from app.schemas.metrics_schemas import EstimatorKind, MetricsRecord
from app.schemas.rule_schemas import RuleDocument, document_to_rule, parse_rule_document, rule_to_document
from app.services.learners import fit_sepl
from app.services.simulation import ScenarioConfig, bayes_rule


class TestRuleDocuments:

    def test_linear_rule_round_trip(self):
        rule = LinearRule([0.5, -1.25, 3.0], 0.125, standardizer=Standardizer([1.0, 2.0, 3.0], [0.5, 1.0, 2.0]))
        document = rule_to_document(rule, ["x1", "x2", "x3"])
        restored = document_to_rule(parse_rule_document(document.model_dump_json()))

        X = np.random.default_rng(0).normal(size=(20, 3))
        np.testing.assert_array_equal(restored.scores(X), rule.scores(X))
        assert document.feature_names == ["x1", "x2", "x3"]

    def test_kernel_rule_round_trip(self, make_dataset):
        data = make_dataset(n=30)
        rule = fit_sepl(data, KernelSpec.rbf(), 0.1)
        restored = document_to_rule(parse_rule_document(rule_to_document(rule).model_dump_json()))

        np.testing.assert_array_equal(
            restored.recommendations(data.covariates), rule.recommendations(data.covariates)
        )
        np.testing.assert_allclose(restored.scores(data.covariates), rule.scores(data.covariates), rtol=1e-12)

    def test_document_is_self_describing(self):
        payload = json.loads(rule_to_document(LinearRule([1.0])).model_dump_json())

        assert payload["format_version"] == 1
        assert payload["variant"] == "linear"
        assert payload["kernel"]["kind"] == "linear"

    def test_kernel_document_needs_support(self):
        with pytest.raises(ValidationError):
            RuleDocument(variant="kernel", coefficients=[1.0], intercept=0.0, kernel={"kind": "rbf", "bandwidth": 1.0})

    def test_invalid_json(self):
        with pytest.raises(DataError):
            parse_rule_document('{"variant": "linear"}')

    def test_bayes_rule_not_serializable(self):
        with pytest.raises(DataError):
            rule_to_document(bayes_rule(ScenarioConfig(p=3), 1))


class TestMetricsRecord:

    def test_agreement_bounds(self):
        with pytest.raises(ValidationError):
            MetricsRecord(value=1.0, benefit=0.0, estimator=EstimatorKind.IPW, agreement=1.5)

    def test_serializes_estimator_name(self):
        record = MetricsRecord(value=1.0, benefit=0.5, estimator="aipwe")
        assert json.loads(record.model_dump_json())["estimator"] == "aipwe"
