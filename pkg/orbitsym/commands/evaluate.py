"""
eval Command
Test metrics of a checkpoint plus an invariance probe, written as a JSON report
"""
import logging
import os

from orbitsym.commands.common import load_dataset
from orbitsym.errors import UsageError
from orbitsym.extensions import SeedStreams, configure_logging, init_error_reporting
from orbitsym.services import CheckpointService, SymmetrizationService
from orbitsym.utils import banner, now_utc, write_json

logger = logging.getLogger(__name__)

REPORT = "report.json"


def register(subparsers, parents):
    parser = subparsers.add_parser("eval", parents=parents, help="evaluate a checkpoint")
    parser.add_argument("--checkpoint", help="checkpoint file (default <out>/checkpoint.osym)")
    parser.add_argument("--data", help="dataset directory (default <out>/data)")
    parser.add_argument("--transforms", type=int, default=0, help="fresh group elements in the invariance probe")
    parser.add_argument("--probe-size", type=int, default=64, help="test examples in the invariance probe")
    parser.add_argument("--report", help="JSON report path (default <out>/report.json)")
    parser.add_argument("--workers", type=int, default=None, help="threads for evaluation passes")
    parser.set_defaults(handler=run)
    return parser


def run(args):
    configure_logging(args.log_level)
    init_error_reporting()
    if args.config or args.overrides:
        raise UsageError("eval takes its config from the checkpoint; --config and --set are not accepted")
    out_dir = args.out or "."
    checkpoint = args.checkpoint or os.path.join(out_dir, "checkpoint.osym")
    model, cfg, _ = CheckpointService.load(checkpoint)
    seed = cfg.seed if args.seed is None else args.seed
    streams = SeedStreams(seed)
    directory = args.data or os.path.join(out_dir, "data")
    splits, _ = load_dataset(directory, cfg)
    f = SymmetrizationService.build_invariant(cfg, model.group, SeedStreams(cfg.seed))
    workers = args.workers or SymmetrizationService.default_workers()

    metrics = {}
    for name in ("test", "test-upright"):
        if name not in splits:
            continue
        result = SymmetrizationService.evaluate_split(model, splits[name], f, streams, norm=cfg.norm, workers=workers)
        metrics[name] = {key: value for key, value in result.items() if key != "outputs"}
        logger.info("%s metric %.6g", name, result["metric"])

    probe = SymmetrizationService.invariance_probe(
        model, splits["test"], args.transforms, streams,
        probe_size=args.probe_size, rapidity=cfg.data.boost_rapidity)
    report = {
        "checkpoint": checkpoint,
        "dataset": directory,
        "task": cfg.task,
        "method": cfg.method,
        "group": cfg.group,
        "seed": seed,
        "metric_name": "accuracy" if model.classification else "mse",
        "metrics": metrics,
        "probe": probe,
        "created": now_utc().isoformat(),
    }
    report_path = args.report or os.path.join(out_dir, REPORT)
    write_json(report_path, report)

    if not args.quiet:
        banner(f"EVALUATION {cfg.method} on {cfg.task}")
        for name, values in metrics.items():
            print(f"  {name:<13} {report['metric_name']} {values['metric']:.6g}  orbit loss {values['orbit_loss']:.6g}")
        if probe["transforms"]:
            print(f"  probe ({probe['transforms']} transforms) max {probe['max']:.3e} mean {probe['mean']:.3e}")
        print(f"  report written to {report_path}")
    return 0
