import argparse
from pathlib import Path

from pydantic import BaseModel

from app.core.config import KernelSection, RunConfig, load_run_config
from app.models.core_model import KernelSpec, StudyPair
from app.services.trial_data import atomic_write_text, read_trial_csv


def kernel_spec(section: KernelSection) -> KernelSpec:
    """KernelSpec from the KERNEL section; an RBF bandwidth of None means median heuristic"""
    if section.kind == "linear":
        return KernelSpec.linear()
    if section.bandwidth_policy == "fixed":
        return KernelSpec.rbf(section.bandwidth)
    return KernelSpec.rbf(None)


def config_from_args(args: argparse.Namespace, **overrides) -> RunConfig:
    """Load --config (optional) and layer the shared CLI flags on top"""
    return load_run_config(
        args.config,
        kernel__kind=getattr(args, "kernel", None),
        kernel__standardize=True if getattr(args, "standardize", False) else None,
        io__out_dir=getattr(args, "out", None),
        io__method=getattr(args, "method", None),
        **overrides,
    )


def load_pair(config: RunConfig) -> StudyPair:
    return StudyPair(
        read_trial_csv(config.data.study1, study_label="study1"),
        read_trial_csv(config.data.study2, study_label="study2"),
    )


def write_document(path: Path, document: BaseModel) -> Path:
    return atomic_write_text(path, document.model_dump_json(indent=2) + "\n")
