"""Domain types shared by every service: trial data, kernels and decision rules."""
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np

from app.core.exceptions import DataError


def _frozen_array(values, ndim: int, name: str) -> np.ndarray:
    array = np.array(values, dtype=float, copy=True)
    if array.ndim != ndim:
        raise DataError(f"{name} must be {ndim}-dimensional, got shape {array.shape}")
    array.setflags(write=False)
    return array


class KernelKind(str, Enum):
    LINEAR = "linear"
    RBF = "rbf"


@dataclass(frozen=True)
class KernelSpec:
    """Linear or Gaussian RBF kernel, k(x, y) = exp(-bandwidth * ||x - y||^2).

    An RBF spec without a bandwidth stands for the median heuristic and is
    resolved against the training covariates when a rule is fitted.
    """

    kind: KernelKind = KernelKind.LINEAR
    bandwidth: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", KernelKind(self.kind))
        if self.kind is KernelKind.LINEAR and self.bandwidth is not None:
            raise DataError("Linear kernel takes no bandwidth")
        if self.bandwidth is not None and not (np.isfinite(self.bandwidth) and self.bandwidth > 0):
            raise DataError(f"RBF bandwidth must be positive, got {self.bandwidth}")

    @classmethod
    def linear(cls) -> "KernelSpec":
        return cls(KernelKind.LINEAR)

    @classmethod
    def rbf(cls, bandwidth: Optional[float] = None) -> "KernelSpec":
        return cls(KernelKind.RBF, bandwidth)

    @property
    def is_resolved(self) -> bool:
        return self.kind is KernelKind.LINEAR or self.bandwidth is not None


@dataclass(frozen=True, eq=False)
class Standardizer:
    """Per-column centering and scaling learned on a training set"""

    center: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "center", _frozen_array(self.center, 1, "center"))
        object.__setattr__(self, "scale", _frozen_array(self.scale, 1, "scale"))
        if self.center.shape != self.scale.shape:
            raise DataError("center and scale must have the same length")
        if np.any(self.scale <= 0):
            raise DataError("scale entries must be positive")

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        X = np.asarray(X, dtype=float)
        scale = X.std(axis=0)
        # constant columns are only centered
        scale = np.where(scale > 0, scale, 1.0)
        return cls(X.mean(axis=0), scale)

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.center) / self.scale


@dataclass(frozen=True, eq=False)
class TrialDataset:
    """One randomized study: covariates, +/-1 treatments, outcomes, propensities.

    ``propensities[i]`` is the probability of the treatment actually received,
    pi(t_i, x_i).
    """

    covariates: np.ndarray
    treatments: np.ndarray
    outcomes: np.ndarray
    propensities: np.ndarray
    study_label: str = "study"

    def __post_init__(self):
        X = _frozen_array(self.covariates, 2, "covariates")
        t = _frozen_array(self.treatments, 1, "treatments")
        r = _frozen_array(self.outcomes, 1, "outcomes")
        pi = _frozen_array(self.propensities, 1, "propensities")

        n, p = X.shape
        if n < 1 or p < 1:
            raise DataError(f"{self.study_label}: need at least one row and one covariate")
        if not (len(t) == len(r) == len(pi) == n):
            raise DataError(f"{self.study_label}: covariates, treatments, outcomes and propensities differ in length")
        if not np.all(np.isin(t, (-1.0, 1.0))):
            raise DataError(f"{self.study_label}: treatments must be coded -1/+1")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(r)) and np.all(np.isfinite(pi))):
            raise DataError(f"{self.study_label}: non-finite values in data")
        if np.any(pi <= 0) or np.any(pi >= 1):
            raise DataError(f"{self.study_label}: propensities must lie strictly inside (0, 1)")

        object.__setattr__(self, "covariates", X)
        object.__setattr__(self, "treatments", t)
        object.__setattr__(self, "outcomes", r)
        object.__setattr__(self, "propensities", pi)

    @property
    def n(self) -> int:
        return self.covariates.shape[0]

    @property
    def p(self) -> int:
        return self.covariates.shape[1]

    def subset(self, indices: Sequence[int]) -> "TrialDataset":
        idx = np.asarray(indices, dtype=int)
        return TrialDataset(
            covariates=self.covariates[idx],
            treatments=self.treatments[idx],
            outcomes=self.outcomes[idx],
            propensities=self.propensities[idx],
            study_label=self.study_label,
        )


@dataclass(frozen=True)
class StudyPair:
    """Two trials sharing a comparator arm coded +1 in both"""

    study1: TrialDataset
    study2: TrialDataset

    def __post_init__(self):
        if self.study1.p != self.study2.p:
            raise DataError(
                f"Studies have different covariate counts: {self.study1.p} vs {self.study2.p}"
            )

    @property
    def p(self) -> int:
        return self.study1.p

    @property
    def studies(self) -> Tuple[TrialDataset, TrialDataset]:
        return self.study1, self.study2

    def study(self, j: int) -> TrialDataset:
        return self.studies[j - 1]

    def other(self, j: int) -> TrialDataset:
        return self.studies[2 - j]


@dataclass(frozen=True)
class SolveStats:
    objective: float
    iterations: int
    converged: bool
    gradient_norm: float


class DecisionRule(ABC):
    """Real-valued decision function f; the recommendation is sign(f) with sign(0) = +1"""

    standardizer: Optional[Standardizer]

    @property
    @abstractmethod
    def n_features(self) -> int:
        ...

    @abstractmethod
    def _raw_scores(self, Z: np.ndarray) -> np.ndarray:
        ...

    def scores(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[np.newaxis, :]
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DataError(f"Expected {self.n_features} covariates, got shape {X.shape}")
        if self.standardizer is not None:
            X = self.standardizer.transform(X)
        return self._raw_scores(X)

    def recommendations(self, X: np.ndarray) -> np.ndarray:
        return np.where(self.scores(X) >= 0, 1, -1)


@dataclass(frozen=True, eq=False)
class LinearRule(DecisionRule):
    weights: np.ndarray
    intercept: float = 0.0
    standardizer: Optional[Standardizer] = None
    stats: Optional[SolveStats] = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "weights", _frozen_array(self.weights, 1, "weights"))
        object.__setattr__(self, "intercept", float(self.intercept))

    @property
    def n_features(self) -> int:
        return self.weights.shape[0]

    def _raw_scores(self, Z: np.ndarray) -> np.ndarray:
        return Z @ self.weights + self.intercept

    @classmethod
    def constant(cls, p: int, value: float) -> "LinearRule":
        """Rule that scores every patient ``value`` (one-size-fits-all)"""
        return cls(np.zeros(p), value)


@dataclass(frozen=True, eq=False)
class KernelRule(DecisionRule):
    spec: KernelSpec
    support: np.ndarray
    coefficients: np.ndarray
    intercept: float = 0.0
    standardizer: Optional[Standardizer] = None
    stats: Optional[SolveStats] = field(default=None, repr=False)

    def __post_init__(self):
        if not self.spec.is_resolved:
            raise DataError("Kernel rule needs a resolved bandwidth")
        support = _frozen_array(self.support, 2, "support")
        coefficients = _frozen_array(self.coefficients, 1, "coefficients")
        if support.shape[0] != coefficients.shape[0]:
            raise DataError(
                f"Support has {support.shape[0]} rows but {coefficients.shape[0]} coefficients"
            )
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "coefficients", coefficients)
        object.__setattr__(self, "intercept", float(self.intercept))

    @property
    def n_features(self) -> int:
        return self.support.shape[1]

    def _raw_scores(self, Z: np.ndarray) -> np.ndarray:
        from app.services.kernels import gram

        return gram(self.spec, Z, self.support).entries @ self.coefficients + self.intercept


def predict_score(rule: DecisionRule, x: np.ndarray) -> float:
    """f(x) for a single covariate vector"""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DataError(f"Expected a covariate vector, got shape {x.shape}")
    return float(rule.scores(x)[0])


def recommend(rule: DecisionRule, x: np.ndarray) -> int:
    """+1 when f(x) >= 0, else -1; zero goes to the shared comparator"""
    return 1 if predict_score(rule, x) >= 0 else -1
