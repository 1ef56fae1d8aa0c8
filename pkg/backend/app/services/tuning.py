import logging
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from sklearn.model_selection import KFold

from app.core.config import GridSection
from app.core.exceptions import DataError
from app.models.core_model import DecisionRule, KernelSpec, StudyPair, TrialDataset
from app.services.evaluation import ipw_value
from app.services.learners import fit_intlf, fit_intls, fit_sepl
from app.services.simulation import FOLD_STREAM, make_rng

logger = logging.getLogger(__name__)

METHODS = ("sepl", "intls", "intlf")

FitProcedure = Callable[[TrialDataset], DecisionRule]


@dataclass(frozen=True)
class TuningGrid:
    lambdas: Tuple[float, ...] = (2.0 ** -8, 2.0 ** -6, 2.0 ** -4, 2.0 ** -2, 1.0, 2.0 ** 2)
    kappa_multipliers: Tuple[float, ...] = (0.0, 0.25, 0.5, 1.0, 2.0, 4.0)
    folds: int = 3
    seed: int = 0
    joint: bool = False

    def __post_init__(self):
        object.__setattr__(self, "lambdas", tuple(float(v) for v in self.lambdas))
        object.__setattr__(self, "kappa_multipliers", tuple(float(v) for v in self.kappa_multipliers))
        if not self.lambdas or any(v <= 0 for v in self.lambdas):
            raise DataError("lambda grid must be nonempty and positive")
        if 0.0 not in self.kappa_multipliers or any(v < 0 for v in self.kappa_multipliers):
            raise DataError("kappa grid must be nonnegative and contain 0")
        if self.folds < 2:
            raise DataError("cross-validation needs at least 2 folds")

    @classmethod
    def from_section(cls, section: GridSection, seed: Optional[int] = None) -> "TuningGrid":
        return cls(
            lambdas=tuple(section.lambdas),
            kappa_multipliers=tuple(section.kappa_multipliers),
            folds=section.folds,
            seed=section.seed if seed is None else seed,
            joint=section.joint,
        )

    def kappas(self, data: TrialDataset) -> Tuple[float, ...]:
        """Kappa grid on the outcome scale of ``data``"""
        scale = float(np.mean(np.abs(data.outcomes)))
        return tuple(m * scale for m in self.kappa_multipliers)


@dataclass(frozen=True)
class CVResult:
    candidates: List[Dict[str, float]]
    fold_scores: np.ndarray
    mean_scores: np.ndarray
    winner: int
    stage: str = ""

    @property
    def best(self) -> Dict[str, float]:
        return self.candidates[self.winner]

    def trace(self) -> List[Dict]:
        return [
            {
                "stage": self.stage,
                "parameters": dict(candidate),
                "fold_scores": [float(s) for s in folds],
                "mean_score": float(mean),
                "selected": i == self.winner,
            }
            for i, (candidate, folds, mean) in enumerate(zip(self.candidates, self.fold_scores, self.mean_scores))
        ]


def kfold_split(n: int, k: int, seed: int) -> List[np.ndarray]:
    """k disjoint held-out index sets covering range(n), sizes differing by at most one.

    The shuffle draws from the Philox fold stream of ``seed``.
    """
    if k < 2:
        raise DataError(f"Need at least 2 folds, got {k}")
    if k > n:
        raise DataError(f"Cannot split {n} observations into {k} folds")
    fold_state = np.random.RandomState(make_rng(seed, FOLD_STREAM).bit_generator)
    splitter = KFold(n_splits=k, shuffle=True, random_state=fold_state)
    return [np.sort(test) for _, test in splitter.split(np.zeros((n, 1)))]


def cv_fold_scores(data: TrialDataset, fit: FitProcedure, folds: Sequence[np.ndarray]) -> np.ndarray:
    scores = []
    all_indices = np.arange(data.n)
    for held_out in folds:
        train = np.setdiff1d(all_indices, held_out, assume_unique=True)
        rule = fit(data.subset(train))
        scores.append(ipw_value(data.subset(held_out), rule))
    return np.asarray(scores)


def cv_score(data: TrialDataset, fit: FitProcedure, folds: Sequence[np.ndarray]) -> float:
    return float(np.mean(cv_fold_scores(data, fit, folds)))


def _select(
    data: TrialDataset,
    candidates: List[Dict[str, float]],
    procedures: List[FitProcedure],
    tie_keys: List[Tuple[float, ...]],
    folds: Sequence[np.ndarray],
    stage: str,
) -> CVResult:
    fold_scores = np.vstack([cv_fold_scores(data, fit, folds) for fit in procedures])
    means = fold_scores.mean(axis=1)
    best = means.max()
    tied = [i for i in range(len(candidates)) if np.isclose(means[i], best, rtol=0.0, atol=1e-12)]
    winner = min(tied, key=lambda i: tie_keys[i])
    return CVResult(candidates, fold_scores, means, winner, stage)


def tune_sepl(
    data: TrialDataset,
    spec: KernelSpec,
    grid: TuningGrid,
    standardize: Optional[bool] = None,
) -> Tuple[float, DecisionRule, CVResult]:
    folds = kfold_split(data.n, grid.folds, grid.seed)
    candidates = [{"lambda": lam} for lam in grid.lambdas]
    procedures = [partial(fit_sepl, spec=spec, lam=lam, standardize=standardize) for lam in grid.lambdas]
    result = _select(data, candidates, procedures, [(lam,) for lam in grid.lambdas], folds, "lambda")

    lam = result.best["lambda"]
    logger.info(f"{data.study_label}: SepL selected lambda={lam:g}")
    return lam, fit_sepl(data, spec, lam, standardize=standardize), result


def tune_intls(
    data: TrialDataset,
    external: DecisionRule,
    spec: KernelSpec,
    lam: float,
    grid: TuningGrid,
    standardize: Optional[bool] = None,
) -> Tuple[float, DecisionRule, CVResult]:
    folds = kfold_split(data.n, grid.folds, grid.seed)
    kappas = grid.kappas(data)
    candidates = [{"lambda": lam, "kappa": kappa} for kappa in kappas]
    procedures = [
        partial(fit_intls, external=external, spec=spec, lam=lam, kappa=kappa, standardize=standardize)
        for kappa in kappas
    ]
    result = _select(data, candidates, procedures, [(kappa,) for kappa in kappas], folds, "kappa")

    kappa = result.best["kappa"]
    logger.info(f"{data.study_label}: IntLS selected kappa={kappa:g}")
    return kappa, fit_intls(data, external, spec, lam, kappa, standardize=standardize), result


def tune_intlf(
    data: TrialDataset,
    other: TrialDataset,
    external: DecisionRule,
    spec: KernelSpec,
    lam: float,
    kappa: float,
    grid: TuningGrid,
    standardize: Optional[bool] = None,
) -> Tuple[float, DecisionRule, CVResult]:
    folds = kfold_split(data.n, grid.folds, grid.seed)
    kappas = grid.kappas(data)
    candidates = [{"lambda": lam, "kappa": kappa, "kappa_cross": cross} for cross in kappas]
    procedures = [
        partial(
            fit_intlf,
            other=other,
            external=external,
            spec=spec,
            lam=lam,
            kappa=kappa,
            kappa_cross=cross,
            standardize=standardize,
        )
        for cross in kappas
    ]
    result = _select(data, candidates, procedures, [(cross,) for cross in kappas], folds, "kappa_cross")

    cross = result.best["kappa_cross"]
    logger.info(f"{data.study_label}: IntLF selected kappa_cross={cross:g}")
    rule = fit_intlf(data, other, external, spec, lam, kappa, cross, standardize=standardize)
    return cross, rule, result


def tune_intlf_joint(
    data: TrialDataset,
    other: TrialDataset,
    external: DecisionRule,
    spec: KernelSpec,
    lam: float,
    grid: TuningGrid,
    standardize: Optional[bool] = None,
) -> Tuple[Tuple[float, float], DecisionRule, CVResult]:
    """Search kappa and kappa_cross together instead of sequentially"""
    folds = kfold_split(data.n, grid.folds, grid.seed)
    kappas = grid.kappas(data)
    pairs = [(kappa, cross) for kappa in kappas for cross in kappas]
    candidates = [{"lambda": lam, "kappa": kappa, "kappa_cross": cross} for kappa, cross in pairs]
    procedures = [
        partial(
            fit_intlf,
            other=other,
            external=external,
            spec=spec,
            lam=lam,
            kappa=kappa,
            kappa_cross=cross,
            standardize=standardize,
        )
        for kappa, cross in pairs
    ]
    result = _select(data, candidates, procedures, pairs, folds, "kappa_joint")

    kappa, cross = result.best["kappa"], result.best["kappa_cross"]
    logger.info(f"{data.study_label}: IntLF (joint) selected kappa={kappa:g}, kappa_cross={cross:g}")
    rule = fit_intlf(data, other, external, spec, lam, kappa, cross, standardize=standardize)
    return (kappa, cross), rule, result


@dataclass
class StudyFit:
    method: str
    rule: DecisionRule
    lam: float
    kappa: Optional[float] = None
    kappa_cross: Optional[float] = None
    cv: List[CVResult] = field(default_factory=list)


def fit_pair(
    pair: StudyPair,
    methods: Iterable[str],
    spec: KernelSpec,
    grid: TuningGrid,
    standardize: Optional[bool] = None,
) -> Dict[Tuple[str, int], StudyFit]:
    """Fit the requested learners for both studies.

    SepL is always fitted since its full-data rules are the external rules of
    the integrative learners; IntLF reuses the IntLS kappa unless joint tuning
    is switched on.
    """
    methods = set(methods)
    unknown = methods - set(METHODS)
    if unknown:
        raise DataError(f"Unknown methods: {sorted(unknown)}")

    fits: Dict[Tuple[str, int], StudyFit] = {}
    for j in (1, 2):
        lam, rule, cv = tune_sepl(pair.study(j), spec, grid, standardize)
        fits[("sepl", j)] = StudyFit("sepl", rule, lam, cv=[cv])

    need_intls = "intls" in methods or ("intlf" in methods and not grid.joint)
    for j in (1, 2):
        data, other = pair.study(j), pair.other(j)
        external = fits[("sepl", 3 - j)].rule
        base = fits[("sepl", j)]

        if need_intls:
            kappa, rule, cv = tune_intls(data, external, spec, base.lam, grid, standardize)
            fits[("intls", j)] = StudyFit("intls", rule, base.lam, kappa, cv=base.cv + [cv])

        if "intlf" in methods:
            if grid.joint:
                (kappa, cross), rule, cv = tune_intlf_joint(
                    data, other, external, spec, base.lam, grid, standardize
                )
                history = base.cv + [cv]
            else:
                intls = fits[("intls", j)]
                kappa = intls.kappa
                cross, rule, cv = tune_intlf(
                    data, other, external, spec, base.lam, kappa, grid, standardize
                )
                history = intls.cv + [cv]
            fits[("intlf", j)] = StudyFit("intlf", rule, base.lam, kappa, cross, cv=history)

    return {key: fit for key, fit in fits.items() if key[0] in methods or key[0] == "sepl"}
