"""
Main entry point for MetaSDF Shape Lab

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""
import argparse
import sys
from typing import List, Optional

from metasdf import __version__
from metasdf.commands import bench, dataset, evaluate, export_params, fit, train
from metasdf.errors import ConfigError, MetaSdfError
from metasdf.utils.logging_utils import clear_logs, log_debug

COMMANDS = (dataset, train, fit, evaluate, export_params, bench)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="metasdf", description="Meta-learned signed distance functions")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", metavar="command")
    subparsers.required = True
    for module in COMMANDS:
        module.add_parser(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, run one command and return its exit code"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code in (0, None) else 2

    clear_logs()
    print(f"\nMetaSDF Shape Lab {__version__}: {args.command}")
    print("=" * 40)
    try:
        return args.handler(args)
    except ConfigError as e:
        print(f"Error in configuration: {e}")
        return 2
    except (MetaSdfError, OSError) as e:
        print(f"Error running {args.command}: {e}")
        log_debug(f"{type(e).__name__} in {args.command}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
