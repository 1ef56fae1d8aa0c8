"""Two-study generative model with a tunable similarity between the studies.

Covariates are Uniform(-1, 1) except the third, 0.8 U + 0.2 X1. Treatments
are fair coin flips coded +/-1 and outcomes are m_j(x) + t c_j(x) + N(0, 1),
where c_j is the treatment contrast of study j (half the Bayes score).
"""
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from app.core.config import ScenarioKind, ScenarioSection, settings
from app.core.exceptions import DataError
from app.models.core_model import DecisionRule, TrialDataset

# stream ids for the per-replication generators
STUDY_STREAMS = {1: 1, 2: 2}
TEST_STREAM = 3
FOLD_STREAM = 4


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based Philox generator keyed by (seed, stream)"""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, stream])))


@dataclass(frozen=True)
class ScenarioConfig:
    kind: ScenarioKind = ScenarioKind.LINEAR
    rho: float = 0.9
    tau: float = 2.3
    n1: int = 100
    n2: int = 100
    p: int = 10
    reps: int = 200
    base_seed: int = 2024
    test_size: int = 100_000
    methods: tuple = ("sepl", "intls", "intlf")
    subgroups: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", ScenarioKind(self.kind))
        object.__setattr__(self, "methods", tuple(self.methods))
        if not 0 < self.rho <= 1:
            raise DataError(f"rho must lie in (0, 1], got {self.rho}")
        if self.tau <= 0:
            raise DataError(f"tau must be positive, got {self.tau}")
        if self.n1 < 20 or self.n2 < 20:
            raise DataError("each study needs at least 20 subjects")
        if self.p < 3:
            raise DataError("the generative model uses at least 3 covariates")

    @classmethod
    def from_section(cls, section: ScenarioSection) -> "ScenarioConfig":
        return cls(
            kind=section.kind,
            rho=section.rho,
            tau=section.tau,
            n1=section.n1,
            n2=section.n2,
            p=section.p,
            reps=section.reps,
            base_seed=section.base_seed,
            test_size=section.test_size or settings.TEST_SET_SIZE,
            methods=tuple(section.methods),
            subgroups=section.subgroups,
        )

    def sample_size(self, study: int) -> int:
        return self.n1 if study == 1 else self.n2


def _check_study(study: int) -> None:
    if study not in (1, 2):
        raise DataError(f"study must be 1 or 2, got {study}")


def draw_covariates(config: ScenarioConfig, n: int, rng: np.random.Generator) -> np.ndarray:
    X = rng.uniform(-1.0, 1.0, size=(n, config.p))
    X[:, 2] = 0.8 * X[:, 2] + 0.2 * X[:, 0]
    return X


def main_effect(study: int, X: np.ndarray) -> np.ndarray:
    _check_study(study)
    x1, x2 = X[:, 0], X[:, 1]
    if study == 1:
        return 1.0 + 2.0 * x1 + x2 ** 2 + x1 * x2
    return 1.0 + 2.0 * x1 ** 2 + 1.5 * x2 + 0.5 * x1 * x2


def contrast(config: ScenarioConfig, study: int, X: np.ndarray) -> np.ndarray:
    """c_j(x), so that the interaction is t * c_j(x)"""
    _check_study(study)
    x1, x2 = X[:, 0], X[:, 1]
    if config.kind is ScenarioKind.LINEAR:
        slope = 2.0 if study == 1 else 2.0 * config.rho
        return 0.2 - x1 - slope * x2
    offset = 2.2 if study == 1 else config.tau
    return -offset + np.exp(x1) + np.exp(x2)


def interaction(config: ScenarioConfig, study: int, X: np.ndarray, treatments: np.ndarray) -> np.ndarray:
    return np.asarray(treatments, dtype=float) * contrast(config, study, X)


def generate_study(config: ScenarioConfig, study: int, n: int, seed: int) -> TrialDataset:
    _check_study(study)
    rng = make_rng(seed, STUDY_STREAMS[study])
    X = draw_covariates(config, n, rng)
    treatments = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    noise = rng.standard_normal(n)
    outcomes = main_effect(study, X) + interaction(config, study, X, treatments) + noise
    return TrialDataset(
        covariates=X,
        treatments=treatments,
        outcomes=outcomes,
        propensities=np.full(n, 0.5),
        study_label=f"study{study}",
    )


def draw_test_covariates(config: ScenarioConfig, size: int, seed: int) -> np.ndarray:
    return draw_covariates(config, size, make_rng(seed, TEST_STREAM))


@dataclass(frozen=True, eq=False)
class BayesRule(DecisionRule):
    """Analytic optimal rule: score is the true treatment contrast"""

    config: ScenarioConfig
    study: int
    standardizer: Optional[object] = field(default=None, init=False)

    @property
    def n_features(self) -> int:
        return self.config.p

    def _raw_scores(self, Z: np.ndarray) -> np.ndarray:
        return contrast(self.config, self.study, Z)


def bayes_rule(config: ScenarioConfig, study: int) -> BayesRule:
    _check_study(study)
    return BayesRule(config, study)


def subgroup_labels(config: ScenarioConfig, X: np.ndarray) -> List[str]:
    """Quadrant of (sign c_1(x), sign c_2(x)), e.g. '+-'"""
    first = np.where(contrast(config, 1, X) >= 0, "+", "-")
    second = np.where(contrast(config, 2, X) >= 0, "+", "-")
    return list(np.char.add(first, second))
