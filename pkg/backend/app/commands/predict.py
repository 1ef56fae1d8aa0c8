import argparse
import logging
from pathlib import Path

import numpy as np
import pandas as pd

from app.core.exceptions import DataError
from app.models.core_model import DecisionRule
from app.schemas.rule_schemas import RuleDocument, document_to_rule, parse_rule_document
from app.services.trial_data import atomic_write_frame, read_covariates

logger = logging.getLogger(__name__)


def load_rule_document(path: Path) -> RuleDocument:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"Rule file not found: {path}")
    return parse_rule_document(path.read_text(encoding="utf-8"))


def load_rule(path: Path) -> DecisionRule:
    return document_to_rule(load_rule_document(path))


def _check_schema(path: Path, columns, document: RuleDocument) -> None:
    if document.feature_names is not None and list(columns) != list(document.feature_names):
        raise DataError(
            f"{path}: covariate columns {list(columns)} do not match the rule's {document.feature_names}"
        )


def predict_frame(rule: DecisionRule, X: np.ndarray) -> pd.DataFrame:
    scores = rule.scores(X)
    return pd.DataFrame(
        {
            "row_id": np.arange(len(scores)),
            "score": scores,
            "recommendation": np.where(scores >= 0, 1, -1),
        }
    )


def cmd_predict(rule_path: Path, data_path: Path, out_dir: Path) -> pd.DataFrame:
    """Score every row of a covariate CSV with a saved rule"""
    document = load_rule_document(rule_path)
    rule = document_to_rule(document)
    X, columns = read_covariates(data_path)
    _check_schema(Path(data_path), columns, document)

    frame = predict_frame(rule, X)
    atomic_write_frame(frame, Path(out_dir) / "predictions.csv")
    logger.info(f"Scored {len(frame)} rows, {int((frame['recommendation'] > 0).sum())} recommended +1")
    return frame


def run(args: argparse.Namespace) -> int:
    cmd_predict(args.rule, args.data, args.out)
    return 0


def register(subparsers) -> None:
    parser = subparsers.add_parser("predict", help="Score a covariate CSV with a saved rule")
    parser.add_argument("rule", type=Path, help="Rule JSON written by fit")
    parser.add_argument("data", type=Path, help="CSV with covariate columns x1..xp")
    parser.add_argument("--out", type=Path, default=Path("."), help="Output directory")
    parser.set_defaults(handler=run)
