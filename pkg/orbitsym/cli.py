"""
Command Line Interface
Parses arguments, dispatches to a command and maps failures to exit codes:
0 success, 1 config or usage, 2 numeric failure, 3 IO or format
"""
import argparse
import logging
import sys

from orbitsym import __version__
from orbitsym.commands import COMMANDS
from orbitsym.errors import ConfigError, OrbitSymError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERIC = 2
EXIT_IO = 3


def common_options():
    """Options every subcommand accepts"""
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key (repeatable, dotted keys allowed)")
    parser.add_argument("--seed", type=int, default=None, help="root seed")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--quiet", action="store_true", help="no banners or progress bars")
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR")
    return parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser():
    parser = _Parser(prog="orbitsym", description="Symmetrize models with learned equivariant symmetrizers")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", metavar="{gen-data,train,eval,check}", parser_class=_Parser)
    subparsers.required = True
    parents = [common_options()]
    for command in COMMANDS.values():
        command.register(subparsers, parents)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except OrbitSymError as exc:
        logger.error("%s failed: %s", args.command, exc)
        if isinstance(exc, ConfigError):
            print(f"error: config key {exc.key}: {exc}", file=sys.stderr)
        else:
            print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
