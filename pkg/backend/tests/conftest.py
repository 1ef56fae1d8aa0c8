import textwrap
from pathlib import Path
from typing import Callable

import numpy as np
import pytest

from app.core.config import Settings
from app.core.scheduler import ReplicationScheduler
from app.models.core_model import StudyPair, TrialDataset
from app.services.simulation import ScenarioConfig, generate_study
from app.services.surrogate_opt import SolveSettings
from app.services.tuning import TuningGrid


@pytest.fixture
def test_settings():
    """Settings with small, fast values and no .env lookup"""
    return Settings(
        _env_file=None,
        LOG_LEVEL="DEBUG",
        MAX_WORKERS=1,
        SOLVER_TOLERANCE=1e-6,
        SOLVER_MAX_ITERATIONS=500,
        TEST_SET_SIZE=2000,
    )


@pytest.fixture
def make_dataset() -> Callable[..., TrialDataset]:
    """Factory for randomized two-arm datasets with a sign(x1) treatment effect"""

    def _make(n: int = 60, p: int = 3, seed: int = 0, propensity: float = 0.5, label: str = "study") -> TrialDataset:
        rng = np.random.default_rng(seed)
        X = rng.uniform(-1.0, 1.0, size=(n, p))
        t = np.where(rng.random(n) < 0.5, 1.0, -1.0)
        r = X[:, 0] + t * np.sign(X[:, 0]) + 0.1 * rng.standard_normal(n)
        return TrialDataset(X, t, r, np.full(n, propensity), study_label=label)

    return _make


@pytest.fixture
def linear_scenario() -> ScenarioConfig:
    return ScenarioConfig(n1=50, n2=50, p=3, reps=3, base_seed=7, test_size=2000, rho=0.9)


@pytest.fixture
def nonlinear_scenario() -> ScenarioConfig:
    return ScenarioConfig(kind="nonlinear", n1=50, n2=50, p=3, reps=3, base_seed=7, test_size=2000, tau=2.3)


@pytest.fixture
def simulated_pair(linear_scenario) -> StudyPair:
    return StudyPair(
        generate_study(linear_scenario, 1, linear_scenario.n1, 11),
        generate_study(linear_scenario, 2, linear_scenario.n2, 11),
    )


@pytest.fixture
def fast_grid() -> TuningGrid:
    return TuningGrid(lambdas=(0.0625, 1.0), kappa_multipliers=(0.0, 1.0), folds=2, seed=3)


@pytest.fixture
def tight_solver() -> SolveSettings:
    return SolveSettings(tolerance=1e-8, max_iterations=5000)


@pytest.fixture
def serial_scheduler() -> ReplicationScheduler:
    return ReplicationScheduler(max_workers=1)


@pytest.fixture
def write_config(tmp_path) -> Callable[[str, str], Path]:
    """Write a SECTION__KEY run config into tmp_path and return its path"""

    def _write(body: str, name: str = "run.env") -> Path:
        path = tmp_path / name
        path.write_text(textwrap.dedent(body).strip() + "\n", encoding="utf-8")
        return path

    return _write
