import logging
import os
import re
import tempfile
from pathlib import Path
from typing import List, Tuple

import numpy as np
import pandas as pd

from app.core.exceptions import DataError
from app.models.core_model import TrialDataset

logger = logging.getLogger(__name__)

COVARIATE_PATTERN = re.compile(r"^x(\d+)$")
DEFAULT_PROPENSITY = 0.5


def _covariate_columns(frame: pd.DataFrame, path: Path) -> List[str]:
    matches = [(int(m.group(1)), col) for col in frame.columns if (m := COVARIATE_PATTERN.match(str(col)))]
    if not matches:
        raise DataError(f"{path}: no covariate columns named x1..xp")
    indices = sorted(i for i, _ in matches)
    if indices != list(range(1, len(indices) + 1)):
        raise DataError(f"{path}: covariate columns must be x1..x{len(indices)} without gaps")
    return [col for _, col in sorted(matches)]


def _load_frame(path: Path) -> pd.DataFrame:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"Data file not found: {path}")
    try:
        frame = pd.read_csv(path, encoding="utf-8", float_precision="round_trip")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataError(f"{path}: unreadable CSV ({e})") from e
    if frame.empty:
        raise DataError(f"{path}: no data rows")
    return frame


def _numeric(frame: pd.DataFrame, columns: List[str], path: Path) -> np.ndarray:
    block = frame[columns]
    if block.isna().any().any():
        raise DataError(f"{path}: missing values in columns {columns}")
    try:
        return block.to_numpy(dtype=float)
    except ValueError as e:
        raise DataError(f"{path}: non-numeric values in columns {columns}") from e


def read_trial_csv(path: Path, study_label: str = "study") -> TrialDataset:
    """Load one study: x1..xp, treatment (+/-1), outcome and optional propensity"""
    path = Path(path)
    frame = _load_frame(path)
    covariates = _covariate_columns(frame, path)
    for column in ("treatment", "outcome"):
        if column not in frame.columns:
            raise DataError(f"{path}: missing required column {column!r}")

    treatments = _numeric(frame, ["treatment"], path)[:, 0]
    if not np.all(np.isin(treatments, (-1.0, 1.0))):
        raise DataError(f"{path}: treatment codes must be -1 or 1")

    if "propensity" in frame.columns:
        propensities = _numeric(frame, ["propensity"], path)[:, 0]
    else:
        logger.warning(f"{path}: no propensity column, assuming 1:1 randomization ({DEFAULT_PROPENSITY})")
        propensities = np.full(len(frame), DEFAULT_PROPENSITY)

    dataset = TrialDataset(
        covariates=_numeric(frame, covariates, path),
        treatments=treatments,
        outcomes=_numeric(frame, ["outcome"], path)[:, 0],
        propensities=propensities,
        study_label=study_label,
    )
    logger.info(f"Loaded {study_label} from {path}: n={dataset.n}, p={dataset.p}")
    return dataset


def read_covariates(path: Path) -> Tuple[np.ndarray, List[str]]:
    """Covariate block only, for scoring patients without treatment or outcome"""
    path = Path(path)
    frame = _load_frame(path)
    columns = _covariate_columns(frame, path)
    return _numeric(frame, columns, path), columns


def trial_frame(dataset: TrialDataset) -> pd.DataFrame:
    frame = pd.DataFrame(dataset.covariates, columns=[f"x{k + 1}" for k in range(dataset.p)])
    frame["treatment"] = dataset.treatments.astype(int)
    frame["outcome"] = dataset.outcomes
    frame["propensity"] = dataset.propensities
    return frame


def write_trial_csv(dataset: TrialDataset, path: Path) -> Path:
    return atomic_write_frame(trial_frame(dataset), path)


def atomic_write_text(path: Path, text: str) -> Path:
    """Write through a temporary file in the target directory, then rename"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp_name, path)
    except Exception:
        if os.path.exists(tmp_name):
            os.remove(tmp_name)
        raise
    logger.info(f"Wrote {path}")
    return path


def atomic_write_frame(frame: pd.DataFrame, path: Path) -> Path:
    return atomic_write_text(path, frame.to_csv(index=False, lineterminator="\n"))
