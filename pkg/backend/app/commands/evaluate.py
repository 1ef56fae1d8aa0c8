import argparse
import logging
from pathlib import Path
from typing import Optional

from app.commands.common import write_document
from app.commands.predict import load_rule
from app.core.config import RunConfig, load_run_config
from app.core.exceptions import ConfigError, DataError
from app.models.core_model import DecisionRule, LinearRule
from app.schemas.metrics_schemas import EstimatorKind, MetricsRecord
from app.services.evaluation import evaluate, true_metrics
from app.services.simulation import ScenarioConfig, bayes_rule
from app.services.trial_data import read_trial_csv

logger = logging.getLogger(__name__)

BUILTIN_RULES = ("all_positive", "all_negative", "bayes")


def _builtin_rule(name: str, p: int, scenario: Optional[ScenarioConfig], study: int) -> DecisionRule:
    if name == "all_positive":
        return LinearRule.constant(p, 1.0)
    if name == "all_negative":
        return LinearRule.constant(p, -1.0)
    if scenario is None:
        raise ConfigError("the bayes rule needs a scenario config")
    return bayes_rule(scenario, study)


def cmd_evaluate(
    estimator: EstimatorKind,
    rule_path: Optional[Path] = None,
    builtin: Optional[str] = None,
    data_path: Optional[Path] = None,
    config: Optional[RunConfig] = None,
    study: int = 1,
    seed: Optional[int] = None,
    out_dir: Path = Path("."),
) -> MetricsRecord:
    """Estimated (ipw, aipwe) or true value and benefit of one rule"""
    estimator = EstimatorKind(estimator)
    if (rule_path is None) == (builtin is None):
        raise ConfigError("give exactly one of a rule file or --rule")
    if builtin is not None and builtin not in BUILTIN_RULES:
        raise ConfigError(f"unknown built-in rule {builtin!r}")
    if study not in (1, 2):
        raise ConfigError(f"study must be 1 or 2, got {study}")

    scenario = None
    if config is not None and config.scenario is not None:
        scenario = ScenarioConfig.from_section(config.scenario)
    if data_path is None and config is not None and config.data is not None:
        data_path = config.data.study1 if study == 1 else config.data.study2

    if estimator is EstimatorKind.TRUE:
        if scenario is None:
            raise ConfigError("--estimator true requires a scenario config")
        rule = load_rule(rule_path) if rule_path else _builtin_rule(builtin, scenario.p, scenario, study)
        record = true_metrics(
            scenario, study, rule, scenario.test_size, scenario.base_seed if seed is None else seed
        )
    else:
        if data_path is None:
            raise ConfigError(f"--estimator {estimator.value} needs a trial CSV")
        data = read_trial_csv(data_path, study_label=f"study{study}")
        rule = load_rule(rule_path) if rule_path else _builtin_rule(builtin, data.p, scenario, study)
        if rule.n_features != data.p:
            raise DataError(f"Rule expects {rule.n_features} covariates, data has {data.p}")
        record = evaluate(data, rule, estimator)

    write_document(Path(out_dir) / "metrics.json", record)
    logger.info(f"{estimator.value} value={record.value:.4f}, benefit={record.benefit:.4f}")
    return record


def run(args: argparse.Namespace) -> int:
    config = load_run_config(args.config) if args.config else None
    rule_file, data = args.rule_file, args.data
    if args.rule and data is None:
        # with --rule the single positional is the data file
        rule_file, data = None, rule_file
    record = cmd_evaluate(
        args.estimator,
        rule_path=rule_file,
        builtin=args.rule,
        data_path=data,
        config=config,
        study=args.study,
        seed=args.seed,
        out_dir=args.out,
    )
    print(record.model_dump_json(indent=2))
    return 0


def register(subparsers) -> None:
    parser = subparsers.add_parser("evaluate", help="Value and benefit of a rule")
    parser.add_argument("rule_file", type=Path, nargs="?", help="Rule JSON written by fit")
    parser.add_argument("data", type=Path, nargs="?", help="Trial CSV (ipw, aipwe)")
    parser.add_argument("--rule", choices=BUILTIN_RULES, help="Evaluate a built-in rule instead of a file")
    parser.add_argument("--estimator", choices=[e.value for e in EstimatorKind], default="ipw")
    parser.add_argument("--config", type=Path, help="Run config; a SCENARIO section enables --estimator true")
    parser.add_argument("--study", type=int, choices=[1, 2], default=1)
    parser.add_argument("--seed", type=int, help="Seed for the true-metric test draws")
    parser.add_argument("--out", type=Path, default=Path("."), help="Output directory")
    parser.set_defaults(handler=run)
