"""
check Command
Runs the property suite for one group and prints a pass/fail table
"""
import logging

from orbitsym.errors import NumericFailureError, UsageError
from orbitsym.extensions import configure_logging, init_error_reporting
from orbitsym.services import CheckService, GroupService
from orbitsym.utils import banner, format_table

logger = logging.getLogger(__name__)

COLUMNS = ("name", "defect", "threshold", "passed", "note")


def register(subparsers, parents):
    parser = subparsers.add_parser("check", parents=parents, help="run the invariant property suite for a group")
    parser.add_argument("--group", required=True, help="group string such as so2, o3, lorentz13, sl2, gl2, sym3")
    parser.add_argument("--trials", type=int, default=1000, help="random trials per property")
    parser.add_argument("--norm", choices=("l1", "l2"), default="l1")
    parser.set_defaults(handler=run)
    return parser


def run(args):
    configure_logging(args.log_level)
    init_error_reporting()
    if args.trials < 1:
        raise UsageError("--trials must be at least 1")
    spec = GroupService.parse(args.group)
    seed = 0 if args.seed is None else args.seed
    rows = CheckService.run(spec, args.trials, seed, norm=args.norm)
    failed = [row.name for row in rows if not row.passed]

    if not args.quiet:
        banner(f"PROPERTY CHECK {spec.name} ({args.trials} trials, seed {seed})")
        print(format_table([row.as_dict() for row in rows], COLUMNS))
        print(f"{len(rows) - len(failed)}/{len(rows)} properties hold")
    if failed:
        logger.error("failed properties: %s", ", ".join(failed))
        return NumericFailureError.exit_code
    return 0
