"""
train Command
Fits a SymmetrizedModel and writes checkpoint.osym, metrics.csv and config.json
"""
import logging
import os
import sys

from orbitsym.commands.common import data_dir, load_dataset, runtime_from_args
from orbitsym.config import TASKS
from orbitsym.models.symmetrized import OUTPUT_ACTIONS
from orbitsym.services import CheckpointService, SymmetrizationService, TrainingService
from orbitsym.utils import banner, ensure_dir

logger = logging.getLogger(__name__)

CHECKPOINT = "checkpoint.osym"
METRICS = "metrics.csv"
CONFIG = "config.json"


def register(subparsers, parents):
    parser = subparsers.add_parser("train", parents=parents, help="train a symmetrized model")
    parser.add_argument("--task", choices=TASKS, help="task whose defaults start the config")
    parser.add_argument("--data", help="dataset directory (default <out>/data)")
    parser.add_argument("--output-action", choices=OUTPUT_ACTIONS, default="invariant-scalar")
    parser.add_argument("--workers", type=int, default=None, help="threads for validation passes")
    parser.set_defaults(handler=run)
    return parser


def run(args):
    runtime = runtime_from_args(args)
    cfg = runtime.cfg
    splits, _ = load_dataset(data_dir(args, cfg), cfg)
    out_dir = ensure_dir(cfg.out_dir)

    model = SymmetrizationService.build_model(cfg, runtime.streams, output_action=args.output_action)
    f = SymmetrizationService.build_invariant(cfg, model.group, runtime.streams)
    workers = args.workers or SymmetrizationService.default_workers()
    progress = not args.quiet and sys.stderr.isatty()

    if not args.quiet:
        banner(f"TRAINING {cfg.method} on {cfg.task} ({cfg.group}, seed {cfg.seed})")
    model, history = TrainingService.train(model, splits, cfg, f, runtime.streams, progress=progress, workers=workers)

    best = min(history, key=lambda row: -row["val_metric"] if model.classification else row["val_metric"],
               default=None)
    extra = {"best_epoch": best["epoch"] if best else None, "provenance": runtime.provenance}
    CheckpointService.save(os.path.join(out_dir, CHECKPOINT), model, cfg, extra=extra)
    CheckpointService.write_metrics(os.path.join(out_dir, METRICS), history)
    cfg.save(os.path.join(out_dir, CONFIG))

    if not args.quiet:
        final = history[-1] if history else None
        if final:
            print(f"  final val metric     {final['val_metric']:.6g}")
            print(f"  final val orbit loss {final['val_orbit_loss']:.6g}")
        if best:
            print(f"  best epoch           {best['epoch']} (val metric {best['val_metric']:.6g})")
        print(f"  written to {out_dir}")
    return 0
