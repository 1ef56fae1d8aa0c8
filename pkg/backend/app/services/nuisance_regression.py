import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from app.core.exceptions import DataError, NumericalError
from app.models.core_model import TrialDataset

logger = logging.getLogger(__name__)

RIDGE_JITTER = 1e-8


@dataclass(frozen=True, eq=False)
class GModel:
    """Linear outcome model x -> intercept + coefficients . x"""

    coefficients: np.ndarray
    intercept: float

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.coefficients.shape[0]:
            raise DataError(f"Expected {self.coefficients.shape[0]} covariates, got shape {X.shape}")
        return X @ self.coefficients + self.intercept

    @classmethod
    def zero(cls, p: int) -> "GModel":
        return cls(np.zeros(p), 0.0)


def weighted_least_squares(X: np.ndarray, y: np.ndarray, weights: np.ndarray) -> GModel:
    """Minimize sum w_i (y_i - b - g.x_i)^2 through the normal equations.

    A ridge jitter is added to the covariate block only when the system is
    rank deficient; the intercept is never penalized.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    weights = np.asarray(weights, dtype=float)
    n, p = X.shape
    if y.shape != (n,) or weights.shape != (n,):
        raise DataError(f"Responses and weights must have length {n}")
    if np.any(weights < 0):
        raise DataError("Regression weights must be nonnegative")

    design = np.column_stack([np.ones(n), X])
    gram_matrix = design.T @ (weights[:, None] * design)
    rhs = design.T @ (weights * y)

    if np.linalg.matrix_rank(gram_matrix) < p + 1:
        logger.debug(f"Rank-deficient design (n={n}, p={p}); adding ridge jitter {RIDGE_JITTER}")
        gram_matrix = gram_matrix + np.diag(np.r_[0.0, np.full(p, RIDGE_JITTER)])

    try:
        theta = linalg.solve(gram_matrix, rhs, assume_a="sym")
    except (linalg.LinAlgError, ValueError) as e:
        raise NumericalError(f"Singular weighted regression design: {e}") from e
    if not np.all(np.isfinite(theta)):
        raise NumericalError("Weighted regression produced non-finite coefficients")

    return GModel(coefficients=theta[1:], intercept=float(theta[0]))


def g_weights(data: TrialDataset) -> np.ndarray:
    """pi(-t, x) / pi(t, x) for two-arm trials"""
    return (1.0 - data.propensities) / data.propensities


def fit_g(data: TrialDataset, responses: np.ndarray) -> GModel:
    """Estimate the g-function by weighted regression of responses on covariates"""
    responses = np.asarray(responses, dtype=float)
    if responses.shape != (data.n,):
        raise DataError(f"{data.study_label}: expected {data.n} responses, got {responses.shape}")
    return weighted_least_squares(data.covariates, responses, g_weights(data))


def residuals(data: TrialDataset, responses: np.ndarray, model: GModel) -> np.ndarray:
    responses = np.asarray(responses, dtype=float)
    if responses.shape != (data.n,):
        raise DataError(f"{data.study_label}: expected {data.n} responses, got {responses.shape}")
    return responses - model.predict(data.covariates)


def fit_arm_models(data: TrialDataset):
    """Per-arm least squares Q(x, +1) and Q(x, -1) used by the AIPW estimator"""
    models = []
    for arm in (1.0, -1.0):
        mask = data.treatments == arm
        if not np.any(mask):
            raise DataError(f"{data.study_label}: no observations in arm {int(arm):+d}")
        models.append(
            weighted_least_squares(data.covariates[mask], data.outcomes[mask], np.ones(mask.sum()))
        )
    return models[0], models[1]
