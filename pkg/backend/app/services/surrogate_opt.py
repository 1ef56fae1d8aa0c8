"""Huberized hinge surrogate and the smooth convex solver behind every learner.

The problem solved is

    (1/n) sum_i w_i phi(y_i f(x_i)) + lam ||f||^2 + (kappa/m) sum_k phi(s_k f(a_k))

over linear functions (||f||^2 = a'a) or kernel expansions on the training
covariates followed by the anchor covariates (||f||^2 = a'Ka). The intercept
is unpenalized.
"""
import logging
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.optimize import minimize

from app.core.config import settings
from app.core.exceptions import DataError, NumericalError
from app.models.core_model import (
    DecisionRule,
    KernelKind,
    KernelRule,
    KernelSpec,
    LinearRule,
    SolveStats,
)
from app.services.kernels import gram, resolve_spec

logger = logging.getLogger(__name__)


def huber_hinge(u):
    """0 for u >= 1, (u - 1)^2 / 4 on [-1, 1), -u below -1"""
    u = np.asarray(u, dtype=float)
    value = np.where(u >= 1, 0.0, np.where(u >= -1, 0.25 * (u - 1.0) ** 2, -u))
    return value if value.ndim else float(value)


def huber_hinge_grad(u):
    u = np.asarray(u, dtype=float)
    value = np.where(u >= 1, 0.0, np.where(u >= -1, 0.5 * (u - 1.0), -1.0))
    return value if value.ndim else float(value)


@dataclass(frozen=True, eq=False)
class WeightedInstances:
    covariates: np.ndarray
    labels: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.covariates, dtype=float)
        labels = np.asarray(self.labels, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if X.ndim != 2 or labels.shape != (X.shape[0],) or weights.shape != (X.shape[0],):
            raise DataError("Instances need matching covariates, labels and weights")
        if not np.all(np.isin(labels, (-1.0, 1.0))):
            raise DataError("Instance labels must be -1/+1")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise DataError("Instance weights must be finite and nonnegative")
        object.__setattr__(self, "covariates", X)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "weights", weights)

    @property
    def n(self) -> int:
        return self.covariates.shape[0]


@dataclass(frozen=True, eq=False)
class FusionTerm:
    """Agreement penalty with another study's rule, evaluated on that study's covariates"""

    anchor_covariates: np.ndarray
    anchor_scores: np.ndarray
    strength: float
    normalizer: int

    def __post_init__(self):
        anchors = np.asarray(self.anchor_covariates, dtype=float)
        scores = np.asarray(self.anchor_scores, dtype=float)
        if anchors.ndim != 2 or scores.shape != (anchors.shape[0],):
            raise DataError("Fusion anchors and anchor scores differ in length")
        if not np.all(np.isin(scores, (-1.0, 1.0))):
            raise DataError("Fusion anchor scores must be -1/+1")
        if self.strength < 0:
            raise DataError(f"Fusion strength must be nonnegative, got {self.strength}")
        if self.normalizer < 1:
            raise DataError("Fusion normalizer must be positive")
        object.__setattr__(self, "anchor_covariates", anchors)
        object.__setattr__(self, "anchor_scores", scores)


@dataclass(frozen=True)
class SolveSettings:
    tolerance: float = 1e-6
    max_iterations: int = 1000

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")

    @classmethod
    def from_settings(cls) -> "SolveSettings":
        return cls(settings.SOLVER_TOLERANCE, settings.SOLVER_MAX_ITERATIONS)


def sign_flip(deltas, treatments, propensities, covariates=None) -> WeightedInstances:
    """Turn signed residual weights into nonnegative weights by flipping labels.

    Weight is |delta| / pi and label t * sign(delta); a zero residual keeps its
    treatment as label and gets weight 0. Without covariates the instances
    carry an empty design, which is enough to inspect labels and weights.
    """
    deltas = np.asarray(deltas, dtype=float)
    treatments = np.asarray(treatments, dtype=float)
    propensities = np.asarray(propensities, dtype=float)
    if not (deltas.shape == treatments.shape == propensities.shape):
        raise DataError("Residuals, treatments and propensities differ in length")
    if covariates is None:
        covariates = np.zeros((deltas.shape[0], 0))
    labels = treatments * np.where(deltas >= 0, 1.0, -1.0)
    weights = np.abs(deltas) / propensities
    return WeightedInstances(covariates, labels, weights)


class SurrogateObjective:
    """Objective value and gradient in the flat parameter vector (coef..., intercept)"""

    def __init__(
        self,
        instances: WeightedInstances,
        spec: KernelSpec,
        lam: float,
        fusion: Optional[FusionTerm] = None,
    ):
        if lam <= 0:
            raise DataError(f"lambda must be positive, got {lam}")
        self.instances = instances
        self.spec = spec
        self.lam = float(lam)
        self.fusion = fusion
        self.n = instances.n

        X = instances.covariates
        if fusion is not None and fusion.anchor_covariates.shape[1] != X.shape[1]:
            raise DataError("Fusion anchors and training covariates differ in column count")

        if spec.kind is KernelKind.LINEAR:
            self.support = None
            self.train_design = X
            self.anchor_design = fusion.anchor_covariates if fusion is not None else None
            self.penalty_matrix = None
        else:
            parts = [X] if fusion is None else [X, fusion.anchor_covariates]
            self.support = np.vstack(parts)
            kernel = gram(spec, self.support, self.support).entries
            self.train_design = kernel[: self.n]
            self.anchor_design = kernel[self.n:] if fusion is not None else None
            self.penalty_matrix = kernel

    @property
    def dimension(self) -> int:
        return self.train_design.shape[1] + 1

    def _penalty(self, coef: np.ndarray) -> Tuple[float, np.ndarray]:
        if self.penalty_matrix is None:
            return coef @ coef, 2.0 * coef
        Kc = self.penalty_matrix @ coef
        return coef @ Kc, 2.0 * Kc

    def value_and_grad(self, theta: np.ndarray) -> Tuple[float, np.ndarray]:
        coef, intercept = theta[:-1], theta[-1]
        labels, weights = self.instances.labels, self.instances.weights

        margins = labels * (self.train_design @ coef + intercept)
        value = np.sum(weights * huber_hinge(margins)) / self.n
        slope = weights * labels * huber_hinge_grad(margins) / self.n
        grad_coef = self.train_design.T @ slope
        grad_intercept = slope.sum()

        penalty, penalty_grad = self._penalty(coef)
        value += self.lam * penalty
        grad_coef = grad_coef + self.lam * penalty_grad

        if self.fusion is not None:
            scale = self.fusion.strength / self.fusion.normalizer
            anchor_labels = self.fusion.anchor_scores
            anchor_margins = anchor_labels * (self.anchor_design @ coef + intercept)
            value += scale * np.sum(huber_hinge(anchor_margins))
            anchor_slope = scale * anchor_labels * huber_hinge_grad(anchor_margins)
            grad_coef = grad_coef + self.anchor_design.T @ anchor_slope
            grad_intercept += anchor_slope.sum()

        return float(value), np.append(grad_coef, grad_intercept)

    def value(self, theta: np.ndarray) -> float:
        return self.value_and_grad(theta)[0]

    def to_rule(self, theta: np.ndarray, stats: Optional[SolveStats] = None) -> DecisionRule:
        coef, intercept = theta[:-1], float(theta[-1])
        if self.support is None:
            return LinearRule(coef, intercept, stats=stats)
        return KernelRule(self.spec, self.support, coef, intercept, stats=stats)


def _checked(objective: SurrogateObjective) -> Callable:
    def fun(theta):
        value, grad = objective.value_and_grad(theta)
        if not (np.isfinite(value) and np.all(np.isfinite(grad))):
            raise NumericalError("Surrogate objective is not finite")
        return value, grad

    return fun


def solve(
    instances: WeightedInstances,
    spec: KernelSpec,
    lam: float,
    fusion: Optional[FusionTerm] = None,
    solve_settings: Optional[SolveSettings] = None,
) -> Tuple[DecisionRule, SolveStats]:
    """Minimize the regularized surrogate risk with BFGS from the zero rule"""
    solve_settings = solve_settings or SolveSettings.from_settings()
    spec = resolve_spec(spec, instances.covariates)
    if fusion is not None and fusion.strength == 0:
        fusion = None

    objective = SurrogateObjective(instances, spec, lam, fusion)
    theta0 = np.zeros(objective.dimension)

    with warnings.catch_warnings():
        # precision-loss warnings are reported through the converged flag instead
        warnings.simplefilter("ignore", RuntimeWarning)
        result = minimize(
            _checked(objective),
            theta0,
            jac=True,
            method="BFGS",
            options={
                "gtol": solve_settings.tolerance,
                "norm": np.inf,
                "maxiter": solve_settings.max_iterations,
            },
        )

    value, grad = objective.value_and_grad(result.x)
    gradient_norm = float(np.max(np.abs(grad)))
    stats = SolveStats(
        objective=value,
        iterations=int(result.nit),
        converged=gradient_norm <= solve_settings.tolerance,
        gradient_norm=gradient_norm,
    )
    if not stats.converged:
        logger.warning(
            f"Solver stopped after {stats.iterations} iterations with gradient norm "
            f"{gradient_norm:.3e} ({result.message})"
        )
    return objective.to_rule(result.x, stats), stats
