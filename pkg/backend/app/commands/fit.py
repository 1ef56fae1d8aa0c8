import argparse
import logging
from pathlib import Path

from app.commands.common import config_from_args, kernel_spec, load_pair, write_document
from app.core.config import RunConfig
from app.core.exceptions import ConfigError
from app.schemas.report_schemas import CVTraceEntry, FitReport, StudyFitReport
from app.schemas.rule_schemas import rule_to_document
from app.services.evaluation import agreement_rate
from app.services.tuning import TuningGrid, fit_pair

logger = logging.getLogger(__name__)


def cmd_fit(config: RunConfig) -> FitReport:
    """Tune and fit one learner on both studies; write the two rules and a fit report"""
    if config.data is None:
        raise ConfigError("fit needs two study CSVs (positional arguments or a DATA section)")

    pair = load_pair(config)
    method = config.io.method
    spec = kernel_spec(config.kernel)
    fits = fit_pair(pair, [method], spec, TuningGrid.from_section(config.grid), config.kernel.standardize)

    out = Path(config.io.out_dir)
    feature_names = [f"x{k + 1}" for k in range(pair.p)]
    studies = []
    for j in (1, 2):
        fit = fits[(method, j)]
        baseline = fits[("sepl", j)].rule
        stats = fit.rule.stats
        studies.append(
            StudyFitReport(
                study=j,
                method=method,
                selected_lambda=fit.lam,
                selected_kappa=fit.kappa,
                selected_kappa_cross=fit.kappa_cross,
                objective=stats.objective if stats else None,
                iterations=stats.iterations if stats else None,
                converged=stats.converged if stats else None,
                agreement_with_sepl=agreement_rate(fit.rule, baseline, pair.study(j).covariates),
                cv_trace=[CVTraceEntry(**entry) for cv in fit.cv for entry in cv.trace()],
            )
        )
        write_document(out / f"rule_study{j}.json", rule_to_document(fit.rule, feature_names))

    report = FitReport(method=method, kernel=spec.kind.value, studies=studies)
    write_document(out / "fit_report.json", report)
    logger.info(f"Fitted {method} rules for both studies into {out}")
    return report


def run(args: argparse.Namespace) -> int:
    config = config_from_args(
        args, data__study1=args.study1, data__study2=args.study2, grid__seed=args.seed
    )
    cmd_fit(config)
    return 0


def register(subparsers) -> None:
    parser = subparsers.add_parser("fit", help="Fit decision rules on two trial CSVs")
    parser.add_argument("study1", type=Path, nargs="?", help="Study 1 CSV (overrides DATA__STUDY1)")
    parser.add_argument("study2", type=Path, nargs="?", help="Study 2 CSV (overrides DATA__STUDY2)")
    parser.add_argument("--config", type=Path, help="Run config (grids, kernel, output)")
    parser.add_argument("--method", choices=["sepl", "intls", "intlf"])
    parser.add_argument("--kernel", choices=["linear", "rbf"])
    parser.add_argument("--standardize", action="store_true", help="Standardize covariates before fitting")
    parser.add_argument("--seed", type=int, help="Cross-validation fold seed")
    parser.add_argument("--out", type=Path, help="Output directory")
    parser.set_defaults(handler=run)
