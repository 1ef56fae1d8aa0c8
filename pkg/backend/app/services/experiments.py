import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from app.core.exceptions import DataError, NumericalError
from app.core.scheduler import ReplicationScheduler
from app.models.core_model import DecisionRule, KernelSpec, LinearRule, StudyPair
from app.services.evaluation import true_metrics_by_subgroup, true_metrics_on
from app.services.simulation import (
    ScenarioConfig,
    bayes_rule,
    draw_test_covariates,
    generate_study,
)
from app.services.tuning import METHODS, TuningGrid, fit_pair

logger = logging.getLogger(__name__)

REFERENCE_METHODS = ("bayes", "all_positive", "all_negative")
SUMMARY_COLUMNS = ["method", "study", "metric", "rmse", "mean_bias", "sd", "q025", "q975"]


@dataclass
class ReplicationResult:
    replication: int
    seed: int
    # one row per (method, study, metric): estimate, truth, bias
    rows: List[Dict] = field(default_factory=list)
    subgroup_rows: List[Dict] = field(default_factory=list)
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.error is not None


@dataclass
class ExperimentTable:
    summary: pd.DataFrame
    biases: pd.DataFrame
    failures: List[ReplicationResult]
    subgroups: Optional[pd.DataFrame] = None


def replication_seed(config: ScenarioConfig, rep: int) -> int:
    return config.base_seed + rep


def _reference_rule(method: str, config: ScenarioConfig, study: int) -> DecisionRule:
    if method == "bayes":
        return bayes_rule(config, study)
    if method == "all_positive":
        return LinearRule.constant(config.p, 1.0)
    return LinearRule.constant(config.p, -1.0)


def _bias_rows(method: str, study: int, estimate, truth) -> List[Dict]:
    return [
        {
            "method": method,
            "study": study,
            "metric": metric,
            "estimate": getattr(estimate, metric),
            "truth": getattr(truth, metric),
            "bias": getattr(estimate, metric) - getattr(truth, metric),
        }
        for metric in ("value", "benefit")
    ]


def run_replication(
    config: ScenarioConfig,
    methods: Sequence[str],
    rep: int,
    spec: KernelSpec,
    grid: TuningGrid,
    standardize: Optional[bool] = None,
) -> ReplicationResult:
    """Simulate both studies, fit the methods and score them on shared test draws"""
    unknown = set(methods) - set(METHODS) - set(REFERENCE_METHODS)
    if unknown:
        raise DataError(f"Unknown methods: {sorted(unknown)}")

    seed = replication_seed(config, rep)
    pair = StudyPair(*(generate_study(config, j, config.sample_size(j), seed) for j in (1, 2)))

    rules: Dict[Tuple[str, int], DecisionRule] = {}
    learners = [m for m in methods if m in METHODS]
    if learners:
        fits = fit_pair(pair, learners, spec, replace(grid, seed=seed), standardize)
        rules.update({key: fit.rule for key, fit in fits.items() if key[0] in learners})
    for method in methods:
        if method in REFERENCE_METHODS:
            for study in (1, 2):
                rules[(method, study)] = _reference_rule(method, config, study)

    X_test = draw_test_covariates(config, config.test_size, seed)
    result = ReplicationResult(replication=rep, seed=seed)
    for study in (1, 2):
        oracle = bayes_rule(config, study)
        truth = true_metrics_on(config, study, oracle, X_test)
        oracle_groups = true_metrics_by_subgroup(config, study, oracle, X_test) if config.subgroups else {}

        for method in methods:
            rule = rules[(method, study)]
            result.rows.extend(_bias_rows(method, study, true_metrics_on(config, study, rule, X_test), truth))
            if config.subgroups:
                groups = true_metrics_by_subgroup(config, study, rule, X_test)
                for quadrant, record in groups.items():
                    for row in _bias_rows(method, study, record, oracle_groups[quadrant]):
                        result.subgroup_rows.append({**row, "quadrant": quadrant})

    return result


@dataclass(frozen=True)
class ReplicationJob:
    config: ScenarioConfig
    methods: Tuple[str, ...]
    rep: int
    spec: KernelSpec
    grid: TuningGrid
    standardize: Optional[bool]
    replicate: Callable[..., ReplicationResult] = run_replication


def _run_job(job: ReplicationJob) -> ReplicationResult:
    try:
        result = job.replicate(job.config, job.methods, job.rep, job.spec, job.grid, job.standardize)
    except Exception as e:
        logger.error(f"Replication {job.rep} failed: {e}", exc_info=True)
        return ReplicationResult(
            replication=job.rep, seed=replication_seed(job.config, job.rep), error=str(e)
        )
    logger.info(f"Replication {job.rep + 1}/{job.config.reps} done (seed {result.seed})")
    return result


def summarize_biases(biases: pd.DataFrame, keys: Sequence[str] = ("method", "study", "metric")) -> pd.DataFrame:
    """RMSE, mean, SD and 2.5%/97.5% quantiles of the bias per group"""
    keys = list(keys)
    grouped = biases.groupby(keys, sort=True)["bias"]
    summary = pd.DataFrame(
        {
            "rmse": grouped.apply(lambda b: float(np.sqrt(np.mean(np.square(b))))),
            "mean_bias": grouped.mean(),
            "sd": grouped.std(ddof=1),
            "q025": grouped.quantile(0.025),
            "q975": grouped.quantile(0.975),
        }
    ).reset_index()
    return summary.sort_values(keys, kind="mergesort").reset_index(drop=True)


def run_experiment(
    config: ScenarioConfig,
    methods: Optional[Sequence[str]] = None,
    spec: Optional[KernelSpec] = None,
    grid: Optional[TuningGrid] = None,
    standardize: Optional[bool] = None,
    scheduler: Optional[ReplicationScheduler] = None,
    replicate: Callable[..., ReplicationResult] = run_replication,
) -> ExperimentTable:
    methods = tuple(methods or config.methods)
    if config.reps < 2:
        raise DataError("An experiment needs at least 2 replications")
    spec = spec or KernelSpec.linear()
    grid = grid or TuningGrid()
    scheduler = scheduler or ReplicationScheduler()

    jobs = [
        ReplicationJob(config, methods, rep, spec, grid, standardize, replicate)
        for rep in range(config.reps)
    ]
    logger.info(
        f"Running {config.reps} replications of the {config.kind.value} scenario "
        f"(n1={config.n1}, n2={config.n2}) for methods {', '.join(methods)}"
    )
    results = scheduler.map(_run_job, jobs)

    completed = [r for r in results if not r.failed]
    failures = [r for r in results if r.failed]
    if not completed:
        raise NumericalError(f"All {config.reps} replications failed")
    if failures:
        logger.warning(f"{len(failures)} of {config.reps} replications failed and were excluded")

    biases = pd.DataFrame([{"replication": r.replication, **row} for r in completed for row in r.rows])
    summary = summarize_biases(biases)[SUMMARY_COLUMNS]

    subgroups = None
    if config.subgroups:
        subgroup_biases = pd.DataFrame(
            [{"replication": r.replication, **row} for r in completed for row in r.subgroup_rows]
        )
        subgroups = summarize_biases(subgroup_biases, ("method", "study", "quadrant", "metric"))

    return ExperimentTable(summary=summary, biases=biases, failures=failures, subgroups=subgroups)
