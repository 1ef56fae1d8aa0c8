import argparse
import logging
from pathlib import Path
from typing import Optional

import pandas as pd

from app.commands.common import config_from_args, kernel_spec, write_document
from app.core.config import RunConfig
from app.core.exceptions import ConfigError
from app.core.scheduler import ReplicationScheduler
from app.schemas.report_schemas import ExperimentDocument, ExperimentRow, FailureRecord
from app.services.experiments import ExperimentTable, run_experiment
from app.services.simulation import ScenarioConfig
from app.services.trial_data import atomic_write_frame
from app.services.tuning import TuningGrid

logger = logging.getLogger(__name__)

FAILURE_COLUMNS = ["replication", "seed", "error"]


def cmd_simulate(config: RunConfig, scheduler: Optional[ReplicationScheduler] = None) -> ExperimentTable:
    """Run the replication study described by the SCENARIO section and write its tables"""
    if config.scenario is None:
        raise ConfigError("simulate needs a SCENARIO section")

    scenario = ScenarioConfig.from_section(config.scenario)
    table = run_experiment(
        scenario,
        spec=kernel_spec(config.kernel),
        grid=TuningGrid.from_section(config.grid),
        standardize=config.kernel.standardize,
        scheduler=scheduler,
    )

    out = Path(config.io.out_dir)
    atomic_write_frame(table.summary, out / "results.csv")
    failures = [FailureRecord(replication=r.replication, seed=r.seed, error=r.error) for r in table.failures]
    atomic_write_frame(
        pd.DataFrame([f.model_dump() for f in failures], columns=FAILURE_COLUMNS), out / "failures.csv"
    )
    document = ExperimentDocument(
        scenario=config.scenario.model_dump(mode="json"),
        replications_requested=scenario.reps,
        replications_completed=scenario.reps - len(failures),
        failures=failures,
        rows=[ExperimentRow(**row) for row in table.summary.to_dict(orient="records")],
    )
    write_document(out / "results.json", document)
    if table.subgroups is not None:
        atomic_write_frame(table.subgroups, out / "subgroups.csv")

    logger.info(f"Simulation finished: {document.replications_completed}/{scenario.reps} replications")
    return table


def run(args: argparse.Namespace) -> int:
    config = config_from_args(args, scenario__reps=args.reps, scenario__base_seed=args.seed)
    cmd_simulate(config)
    return 0


def register(subparsers) -> None:
    parser = subparsers.add_parser("simulate", help="Run the simulation study for a scenario config")
    parser.add_argument("--config", type=Path, required=True, help="Run config with a SCENARIO section")
    parser.add_argument("--reps", type=int, help="Number of replications")
    parser.add_argument("--seed", type=int, help="Base seed; replication r uses seed + r")
    parser.add_argument("--kernel", choices=["linear", "rbf"])
    parser.add_argument("--standardize", action="store_true", help="Standardize covariates before fitting")
    parser.add_argument("--out", type=Path, help="Output directory")
    parser.set_defaults(handler=run)
