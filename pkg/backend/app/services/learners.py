"""Separate and integrative learning pipelines.

SepL weights each patient by the residual of the outcome after removing the
fitted g-function. IntLS shifts outcomes toward agreement with the other
study's rule before doing the same, and IntLF additionally penalizes
disagreement with that rule on the other study's patients.
"""
import logging
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from app.core.exceptions import DataError
from app.models.core_model import (
    DecisionRule,
    KernelKind,
    KernelSpec,
    Standardizer,
    TrialDataset,
)
from app.services.nuisance_regression import fit_g, residuals
from app.services.surrogate_opt import FusionTerm, SolveSettings, sign_flip, solve

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class PseudoOutcomes:
    values: np.ndarray
    kappa: float
    external: DecisionRule


def _standardizer(data: TrialDataset, spec: KernelSpec, standardize: Optional[bool]) -> Optional[Standardizer]:
    if standardize is None:
        standardize = spec.kind is KernelKind.RBF
    return Standardizer.fit(data.covariates) if standardize else None


def _transform(standardizer: Optional[Standardizer], X: np.ndarray) -> np.ndarray:
    return X if standardizer is None else standardizer.transform(X)


def _fit_from_responses(
    data: TrialDataset,
    responses: np.ndarray,
    spec: KernelSpec,
    lam: float,
    fusion_data: Optional[TrialDataset] = None,
    fusion_scores: Optional[np.ndarray] = None,
    fusion_strength: float = 0.0,
    standardize: Optional[bool] = None,
    solve_settings: Optional[SolveSettings] = None,
) -> DecisionRule:
    """Residualize responses with g fitted on them, flip signs and solve"""
    model = fit_g(data, responses)
    deltas = residuals(data, responses, model)

    standardizer = _standardizer(data, spec, standardize)
    instances = sign_flip(
        deltas, data.treatments, data.propensities, _transform(standardizer, data.covariates)
    )

    fusion = None
    if fusion_data is not None and fusion_strength > 0:
        fusion = FusionTerm(
            anchor_covariates=_transform(standardizer, fusion_data.covariates),
            anchor_scores=fusion_scores,
            strength=fusion_strength,
            normalizer=fusion_data.n,
        )

    rule, stats = solve(instances, spec, lam, fusion, solve_settings)
    logger.debug(
        f"{data.study_label}: fitted lambda={lam:g}, fusion strength={fusion_strength:g} "
        f"in {stats.iterations} iterations (converged={stats.converged})"
    )
    return replace(rule, standardizer=standardizer)


def fit_sepl(
    data: TrialDataset,
    spec: KernelSpec,
    lam: float,
    standardize: Optional[bool] = None,
    solve_settings: Optional[SolveSettings] = None,
) -> DecisionRule:
    return _fit_from_responses(
        data, data.outcomes, spec, lam, standardize=standardize, solve_settings=solve_settings
    )


def pseudo_outcomes(data: TrialDataset, kappa: float, external: DecisionRule) -> PseudoOutcomes:
    """r + kappa * pi * sign(t f'(x)), with sign(0) = 0"""
    if kappa < 0:
        raise DataError(f"kappa must be nonnegative, got {kappa}")
    agreement = np.sign(data.treatments * external.scores(data.covariates))
    values = data.outcomes + kappa * data.propensities * agreement
    return PseudoOutcomes(values=values, kappa=float(kappa), external=external)


def fit_intls(
    data: TrialDataset,
    external: DecisionRule,
    spec: KernelSpec,
    lam: float,
    kappa: float,
    standardize: Optional[bool] = None,
    solve_settings: Optional[SolveSettings] = None,
) -> DecisionRule:
    shifted = pseudo_outcomes(data, kappa, external)
    logger.debug(f"{data.study_label}: IntLS with kappa={kappa:g}")
    return _fit_from_responses(
        data, shifted.values, spec, lam, standardize=standardize, solve_settings=solve_settings
    )


def anchor_scores(external: DecisionRule, X: np.ndarray) -> np.ndarray:
    """External rule's scores mapped to +/-1, zero going to +1"""
    return external.recommendations(X).astype(float)


def fit_intlf(
    data: TrialDataset,
    other: TrialDataset,
    external: DecisionRule,
    spec: KernelSpec,
    lam: float,
    kappa: float,
    kappa_cross: float,
    standardize: Optional[bool] = None,
    solve_settings: Optional[SolveSettings] = None,
) -> DecisionRule:
    if other.p != data.p:
        raise DataError(
            f"{data.study_label} and {other.study_label} have different covariate counts"
        )
    if kappa_cross < 0:
        raise DataError(f"kappa_cross must be nonnegative, got {kappa_cross}")
    shifted = pseudo_outcomes(data, kappa, external)
    logger.debug(f"{data.study_label}: IntLF with kappa={kappa:g}, kappa_cross={kappa_cross:g}")
    return _fit_from_responses(
        data,
        shifted.values,
        spec,
        lam,
        fusion_data=other,
        fusion_scores=anchor_scores(external, other.covariates),
        fusion_strength=kappa_cross,
        standardize=standardize,
        solve_settings=solve_settings,
    )
