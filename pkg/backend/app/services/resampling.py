"""Repeated split-sample evaluation for a pair of real trials.

Each repeat halves both studies at random, fits the learners on the training
halves and scores every rule on the held-out halves. There is no ground truth
here, so the tables report estimated value and benefit together with how often
the integrative rules agree with the separately learned one.
"""
import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from app.core.exceptions import DataError, NumericalError
from app.core.scheduler import ReplicationScheduler
from app.models.core_model import DecisionRule, KernelSpec, LinearRule, StudyPair, TrialDataset
from app.schemas.metrics_schemas import EstimatorKind
from app.services.evaluation import agreement_rate, evaluate
from app.services.nuisance_regression import fit_arm_models
from app.services.simulation import make_rng
from app.services.tuning import METHODS, TuningGrid, fit_pair

logger = logging.getLogger(__name__)

BASELINES = ("all_positive", "all_negative")
SPLIT_STREAMS = {1: 11, 2: 12}
RESAMPLE_COLUMNS = ["method", "study", "metric", "mean", "sd"]


def split_half(data: TrialDataset, rng: np.random.Generator) -> Tuple[TrialDataset, TrialDataset]:
    """Random 1:1 partition into (train, test)"""
    if data.n < 4:
        raise DataError(f"{data.study_label}: too few rows to split ({data.n})")
    order = rng.permutation(data.n)
    cut = data.n // 2
    return data.subset(np.sort(order[:cut])), data.subset(np.sort(order[cut:]))


@dataclass
class ResampleResult:
    repeat: int
    seed: int
    rows: List[Dict] = field(default_factory=list)
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.error is not None


@dataclass
class ResampleTable:
    summary: pd.DataFrame
    runs: pd.DataFrame
    failures: List[ResampleResult]


def _score_rows(method: str, study: int, rule: DecisionRule, train: TrialDataset, test: TrialDataset) -> List[Dict]:
    q_plus, q_minus = fit_arm_models(train)
    rows = []
    for estimator in (EstimatorKind.IPW, EstimatorKind.AIPWE):
        record = evaluate(test, rule, estimator, q_plus, q_minus)
        rows.append({"method": method, "study": study, "metric": f"{estimator.value}_value", "value": record.value})
        rows.append({"method": method, "study": study, "metric": f"{estimator.value}_benefit", "value": record.benefit})
    return rows


def run_resample(
    pair: StudyPair,
    methods: Sequence[str],
    repeat: int,
    seed: int,
    spec: KernelSpec,
    grid: TuningGrid,
    standardize: Optional[bool] = None,
) -> ResampleResult:
    halves = {j: split_half(pair.study(j), make_rng(seed, SPLIT_STREAMS[j])) for j in (1, 2)}
    train = StudyPair(halves[1][0], halves[2][0])

    learners = [m for m in methods if m in METHODS]
    fits = fit_pair(train, learners, spec, replace(grid, seed=seed), standardize)

    result = ResampleResult(repeat=repeat, seed=seed)
    for j in (1, 2):
        train_j, test_j = halves[j]
        sepl = fits[("sepl", j)].rule
        for method in methods:
            if method in BASELINES:
                rule = LinearRule.constant(pair.p, 1.0 if method == "all_positive" else -1.0)
            else:
                rule = fits[(method, j)].rule
            result.rows.extend(_score_rows(method, j, rule, train_j, test_j))
            if method in ("intls", "intlf"):
                result.rows.append(
                    {
                        "method": method,
                        "study": j,
                        "metric": "agreement_with_sepl",
                        "value": agreement_rate(rule, sepl, test_j.covariates),
                    }
                )
    return result


@dataclass(frozen=True)
class ResampleJob:
    pair: StudyPair
    methods: Tuple[str, ...]
    repeat: int
    seed: int
    spec: KernelSpec
    grid: TuningGrid
    standardize: Optional[bool]


def _run_job(job: ResampleJob) -> ResampleResult:
    try:
        result = run_resample(job.pair, job.methods, job.repeat, job.seed, job.spec, job.grid, job.standardize)
    except Exception as e:
        logger.error(f"Resample {job.repeat} failed: {e}", exc_info=True)
        return ResampleResult(repeat=job.repeat, seed=job.seed, error=str(e))
    logger.info(f"Resample {job.repeat} done (seed {job.seed})")
    return result


def run_resampling(
    pair: StudyPair,
    methods: Sequence[str],
    repeats: int,
    base_seed: int,
    spec: Optional[KernelSpec] = None,
    grid: Optional[TuningGrid] = None,
    standardize: Optional[bool] = None,
    scheduler: Optional[ReplicationScheduler] = None,
) -> ResampleTable:
    methods = tuple(methods)
    unknown = set(methods) - set(METHODS) - set(BASELINES)
    if unknown:
        raise DataError(f"Unknown methods: {sorted(unknown)}")
    if repeats < 2:
        raise DataError("Resampling needs at least 2 repeats")
    spec = spec or KernelSpec.linear()
    grid = grid or TuningGrid()
    scheduler = scheduler or ReplicationScheduler()

    jobs = [
        ResampleJob(pair, methods, r, base_seed + r, spec, grid, standardize) for r in range(repeats)
    ]
    logger.info(f"Running {repeats} split-half resamples for methods {', '.join(methods)}")
    results = scheduler.map(_run_job, jobs)

    completed = [r for r in results if not r.failed]
    failures = [r for r in results if r.failed]
    if not completed:
        raise NumericalError(f"All {repeats} resamples failed")
    if failures:
        logger.warning(f"{len(failures)} of {repeats} resamples failed and were excluded")

    runs = pd.DataFrame([{"repeat": r.repeat, **row} for r in completed for row in r.rows])
    grouped = runs.groupby(["method", "study", "metric"], sort=True)["value"]
    summary = pd.DataFrame({"mean": grouped.mean(), "sd": grouped.std(ddof=1)}).reset_index()
    summary = summary.sort_values(["method", "study", "metric"], kind="mergesort").reset_index(drop=True)
    return ResampleTable(summary=summary[RESAMPLE_COLUMNS], runs=runs, failures=failures)
