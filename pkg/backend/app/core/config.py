import json
from enum import Enum
from pathlib import Path
from typing import Dict, List, Literal, Optional

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from app.core.exceptions import ConfigError


class Settings(BaseSettings):
    # Logging Configuration
    LOG_LEVEL: str = "INFO"
    LOG_FILE: Optional[str] = None

    # Execution Configuration
    MAX_WORKERS: int = Field(default=1, ge=1)

    # Solver Configuration
    SOLVER_TOLERANCE: float = Field(default=1e-6, gt=0)
    SOLVER_MAX_ITERATIONS: int = Field(default=1000, ge=1)

    # Evaluation Configuration
    TEST_SET_SIZE: int = Field(default=100_000, ge=1)

    model_config = SettingsConfigDict(env_file=".env", case_sensitive=True, extra="ignore")


settings = Settings()


class ScenarioKind(str, Enum):
    LINEAR = "linear"
    NONLINEAR = "nonlinear"


def _parse_number_list(value):
    """Accept a JSON array or a comma-separated string of numbers"""
    if isinstance(value, str):
        text = value.strip()
        if text.startswith("["):
            return json.loads(text)
        return [item.strip() for item in text.split(",") if item.strip()]
    return value


class ScenarioSection(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: ScenarioKind = ScenarioKind.LINEAR
    rho: float = Field(default=0.9, gt=0, le=1)
    tau: float = Field(default=2.3, gt=0)
    n1: int = Field(default=100, ge=20)
    n2: int = Field(default=100, ge=20)
    p: int = Field(default=10, ge=3)
    reps: int = Field(default=200, ge=1)
    base_seed: int = Field(default=2024, ge=0)
    test_size: Optional[int] = Field(default=None, ge=1)
    methods: List[str] = ["sepl", "intls", "intlf"]
    subgroups: bool = False

    @field_validator("methods", mode="before")
    @classmethod
    def _split_methods(cls, value):
        if isinstance(value, str):
            return [item.strip().lower() for item in value.split(",") if item.strip()]
        return value


class DataSection(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    study1: Path
    study2: Path


class KernelSection(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: Literal["linear", "rbf"] = "linear"
    bandwidth_policy: Literal["median", "fixed"] = "median"
    bandwidth: Optional[float] = Field(default=None, gt=0)
    standardize: Optional[bool] = None

    @model_validator(mode="after")
    def _check_bandwidth(self):
        if self.kind == "rbf" and self.bandwidth_policy == "fixed" and self.bandwidth is None:
            raise ValueError("fixed bandwidth policy requires KERNEL__BANDWIDTH")
        return self


class GridSection(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    lambdas: List[float] = [2.0 ** -8, 2.0 ** -6, 2.0 ** -4, 2.0 ** -2, 1.0, 2.0 ** 2]
    kappa_multipliers: List[float] = [0.0, 0.25, 0.5, 1.0, 2.0, 4.0]
    folds: int = Field(default=3, ge=2)
    seed: int = Field(default=0, ge=0)
    joint: bool = False

    @field_validator("lambdas", "kappa_multipliers", mode="before")
    @classmethod
    def _split_lists(cls, value):
        return _parse_number_list(value)

    @field_validator("lambdas")
    @classmethod
    def _positive_lambdas(cls, value: List[float]) -> List[float]:
        if not value or any(lam <= 0 for lam in value):
            raise ValueError("lambda grid must be nonempty and positive")
        return value

    @field_validator("kappa_multipliers")
    @classmethod
    def _kappa_grid_has_zero(cls, value: List[float]) -> List[float]:
        if not value or any(k < 0 for k in value):
            raise ValueError("kappa grid must be nonempty and nonnegative")
        if 0.0 not in value:
            raise ValueError("kappa grid must contain 0")
        return value


class IOSection(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    out_dir: Path = Path("results")
    method: Literal["sepl", "intls", "intlf"] = "intlf"
    resamples: int = Field(default=100, ge=1)


class RunConfig(BaseModel):
    """Validated run configuration: a scenario or a pair of trial CSVs, never both"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    scenario: Optional[ScenarioSection] = None
    data: Optional[DataSection] = None
    kernel: KernelSection = KernelSection()
    grid: GridSection = GridSection()
    io: IOSection = IOSection()

    @model_validator(mode="after")
    def _exactly_one_source(self):
        if (self.scenario is None) == (self.data is None):
            raise ValueError("exactly one of the SCENARIO or DATA sections must be present")
        return self


def _validate(payload: Dict) -> RunConfig:
    try:
        return RunConfig.model_validate(payload)
    except ValidationError as e:
        raise ConfigError(f"Invalid run configuration: {e}") from e


def _read_sections(path: Path) -> Dict[str, Dict[str, str]]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Config file not found: {path}")

    payload: Dict[str, Dict[str, str]] = {}
    for raw_key, value in dotenv_values(path).items():
        if "__" not in raw_key:
            raise ConfigError(f"Config key {raw_key!r} is not of the form SECTION__KEY")
        section, key = raw_key.lower().split("__", 1)
        if section not in RunConfig.model_fields:
            raise ConfigError(f"Unknown config section {section.upper()!r}")
        if value is None:
            raise ConfigError(f"Config key {raw_key!r} has no value")
        payload.setdefault(section, {})[key] = value

    # relative data paths resolve against the config file location
    if "data" in payload:
        for key, value in payload["data"].items():
            candidate = Path(value)
            if not candidate.is_absolute():
                payload["data"][key] = str(path.parent / candidate)
    return payload


def load_run_config(path: Optional[Path] = None, **overrides) -> RunConfig:
    """Parse a sectioned key-value file (SECTION__KEY=value, dotenv syntax).

    Overrides are given as ``section__key=value`` keyword arguments, take
    precedence over the file and are applied before validation; ``None``
    values are skipped.
    """
    payload = _read_sections(path) if path is not None else {}
    for dotted, value in overrides.items():
        if value is None:
            continue
        section, key = dotted.split("__", 1)
        if section not in RunConfig.model_fields:
            raise ConfigError(f"Unknown config section {section.upper()!r}")
        payload.setdefault(section, {})[key] = value
    return _validate(payload)
