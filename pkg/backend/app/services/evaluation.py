import logging
from typing import Dict, Optional

import numpy as np

from app.core.exceptions import DataError
from app.models.core_model import DecisionRule, TrialDataset
from app.schemas.metrics_schemas import EstimatorKind, MetricsRecord
from app.services.nuisance_regression import GModel, fit_arm_models
from app.services.simulation import (
    ScenarioConfig,
    contrast,
    draw_test_covariates,
    main_effect,
    subgroup_labels,
)

logger = logging.getLogger(__name__)


def _ipw(data: TrialDataset, recommended: np.ndarray) -> float:
    matched = data.treatments == recommended
    return float(np.mean(np.where(matched, data.outcomes / data.propensities, 0.0)))


def _aipwe(data: TrialDataset, recommended: np.ndarray, q_plus: GModel, q_minus: GModel) -> float:
    X = data.covariates
    fitted = np.where(recommended == 1, q_plus.predict(X), q_minus.predict(X))
    matched = data.treatments == recommended
    augmented = np.where(matched, (data.outcomes - fitted) / data.propensities, 0.0) + fitted
    return float(np.mean(augmented))


def ipw_value(data: TrialDataset, rule: DecisionRule) -> float:
    """(1/n) sum r 1{t = d(x)} / pi"""
    return _ipw(data, rule.recommendations(data.covariates))


def aipwe_value(data: TrialDataset, rule: DecisionRule, q_plus: GModel, q_minus: GModel) -> float:
    """Doubly robust value with per-arm outcome models Q(x, +1), Q(x, -1)"""
    return _aipwe(data, rule.recommendations(data.covariates), q_plus, q_minus)


def benefit(
    data: TrialDataset,
    rule: DecisionRule,
    estimator: EstimatorKind = EstimatorKind.IPW,
    q_plus: Optional[GModel] = None,
    q_minus: Optional[GModel] = None,
) -> float:
    """V(d) - V(-d), where -d recommends the other arm for every patient"""
    return evaluate(data, rule, estimator, q_plus, q_minus).benefit


def evaluate(
    data: TrialDataset,
    rule: DecisionRule,
    estimator: EstimatorKind = EstimatorKind.IPW,
    q_plus: Optional[GModel] = None,
    q_minus: Optional[GModel] = None,
) -> MetricsRecord:
    estimator = EstimatorKind(estimator)
    recommended = rule.recommendations(data.covariates)

    if estimator is EstimatorKind.IPW:
        value, complement = _ipw(data, recommended), _ipw(data, -recommended)
    elif estimator is EstimatorKind.AIPWE:
        if q_plus is None or q_minus is None:
            logger.debug(f"{data.study_label}: fitting per-arm outcome models for AIPWE")
            q_plus, q_minus = fit_arm_models(data)
        value = _aipwe(data, recommended, q_plus, q_minus)
        complement = _aipwe(data, -recommended, q_plus, q_minus)
    else:
        raise DataError("True metrics need a scenario; use true_metrics instead")

    return MetricsRecord(value=value, benefit=value - complement, estimator=estimator)


def true_metrics_on(config: ScenarioConfig, study: int, rule: DecisionRule, X: np.ndarray) -> MetricsRecord:
    """Value and benefit from the known conditional means on fixed test draws"""
    recommended = rule.recommendations(X)
    effect = contrast(config, study, X)
    value = np.mean(main_effect(study, X) + recommended * effect)
    gain = np.mean(2.0 * recommended * effect)
    return MetricsRecord(value=value, benefit=gain, estimator=EstimatorKind.TRUE)


def true_metrics(
    config: ScenarioConfig,
    study: int,
    rule: DecisionRule,
    test_size: int,
    seed: int,
) -> MetricsRecord:
    X = draw_test_covariates(config, test_size, seed)
    return true_metrics_on(config, study, rule, X)


def true_metrics_by_subgroup(
    config: ScenarioConfig, study: int, rule: DecisionRule, X: np.ndarray
) -> Dict[str, MetricsRecord]:
    labels = np.asarray(subgroup_labels(config, X))
    return {
        quadrant: true_metrics_on(config, study, rule, X[labels == quadrant])
        for quadrant in sorted(set(labels))
    }


def agreement_rate(rule_a: DecisionRule, rule_b: DecisionRule, X: np.ndarray) -> float:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DataError("Agreement rate needs at least one covariate row")
    return float(np.mean(rule_a.recommendations(X) == rule_b.recommendations(X)))
