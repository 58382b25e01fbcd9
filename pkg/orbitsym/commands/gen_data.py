"""
gen-data Command
Writes the task's dataset splits and sidecar under --data or <out>/data
"""
import logging

from orbitsym.commands.common import data_dir, runtime_from_args
from orbitsym.config import TASKS
from orbitsym.services import DataService
from orbitsym.utils import banner, ensure_dir

logger = logging.getLogger(__name__)


def register(subparsers, parents):
    parser = subparsers.add_parser("gen-data", parents=parents, help="generate a dataset for a task")
    parser.add_argument("--task", choices=TASKS, help="task whose defaults start the config")
    parser.add_argument("--data", help="output directory (default <out>/data)")
    parser.set_defaults(handler=run)
    return parser


def run(args):
    runtime = runtime_from_args(args)
    cfg = runtime.cfg
    directory = ensure_dir(data_dir(args, cfg))
    splits, seed = DataService.generate(cfg, runtime.streams)
    points = cfg.data.points if cfg.task == "rotated-digits" else None
    DataService.save_splits(directory, splits, cfg.task, seed, points=points)

    if not args.quiet:
        banner(f"DATASET {cfg.task} (seed {cfg.seed})")
        for name, split in splits.items():
            print(f"  {name:<13} {len(split):>6} examples")
        print(f"  written to {directory}")
    return 0
