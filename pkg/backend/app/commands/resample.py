import argparse
import logging
from pathlib import Path
from typing import Optional

from app.commands.common import config_from_args, kernel_spec, load_pair
from app.core.config import RunConfig
from app.core.exceptions import ConfigError
from app.core.scheduler import ReplicationScheduler
from app.services.resampling import BASELINES, ResampleTable, run_resampling
from app.services.trial_data import atomic_write_frame
from app.services.tuning import METHODS, TuningGrid

logger = logging.getLogger(__name__)


def cmd_resample(config: RunConfig, scheduler: Optional[ReplicationScheduler] = None) -> ResampleTable:
    """Split-half evaluation of every learner and baseline on two real trials"""
    if config.data is None:
        raise ConfigError("resample needs two study CSVs (positional arguments or a DATA section)")

    table = run_resampling(
        load_pair(config),
        METHODS + BASELINES,
        repeats=config.io.resamples,
        base_seed=config.grid.seed,
        spec=kernel_spec(config.kernel),
        grid=TuningGrid.from_section(config.grid),
        standardize=config.kernel.standardize,
        scheduler=scheduler,
    )

    out = Path(config.io.out_dir)
    atomic_write_frame(table.summary, out / "resample.csv")
    atomic_write_frame(table.runs, out / "resample_runs.csv")
    logger.info(f"Resampling finished: {len(table.failures)} failed repeats, summary in {out}")
    return table


def run(args: argparse.Namespace) -> int:
    config = config_from_args(
        args,
        data__study1=args.study1,
        data__study2=args.study2,
        grid__seed=args.seed,
        io__resamples=args.reps,
    )
    cmd_resample(config)
    return 0


def register(subparsers) -> None:
    parser = subparsers.add_parser("resample", help="Repeated split-half evaluation on two trial CSVs")
    parser.add_argument("study1", type=Path, nargs="?", help="Study 1 CSV (overrides DATA__STUDY1)")
    parser.add_argument("study2", type=Path, nargs="?", help="Study 2 CSV (overrides DATA__STUDY2)")
    parser.add_argument("--config", type=Path, help="Run config (grids, kernel, output)")
    parser.add_argument("--kernel", choices=["linear", "rbf"])
    parser.add_argument("--standardize", action="store_true", help="Standardize covariates before fitting")
    parser.add_argument("--reps", type=int, help="Number of split-half repeats")
    parser.add_argument("--seed", type=int, help="Base seed; repeat r uses seed + r")
    parser.add_argument("--out", type=Path, help="Output directory")
    parser.set_defaults(handler=run)
