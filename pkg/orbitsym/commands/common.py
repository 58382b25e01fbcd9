"""
Shared command plumbing
"""
import os

from orbitsym import create_runtime
from orbitsym.errors import UsageError
from orbitsym.services import DataService


def runtime_from_args(args, task=None):
    return create_runtime(
        config_path=args.config,
        overrides=args.overrides,
        seed=args.seed,
        out_dir=args.out,
        task=task or getattr(args, "task", None),
        log_level=args.log_level,
    )


def data_dir(args, cfg):
    """--data when given, otherwise <out>/data"""
    return getattr(args, "data", None) or os.path.join(cfg.out_dir, "data")


def load_dataset(directory, cfg):
    """Splits for cfg.task, rejecting a dataset written for the other task"""
    splits, sidecar = DataService.load_splits(directory)
    if sidecar.get("task") != cfg.task:
        raise UsageError(f"dataset in {directory} is for task {sidecar.get('task')}, config says {cfg.task}")
    if cfg.task == "rotated-digits" and sidecar.get("points") != cfg.data.points:
        raise UsageError(f"dataset holds {sidecar.get('points')} points per example, config says {cfg.data.points}")
    return splits, sidecar
