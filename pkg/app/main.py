"""Command line entry point with exception handling"""

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from app import __version__
from app.cli.commands import COMMANDS
from app.cli.error_handlers import handle_exception
from app.config import settings
from app.utils.logger import setup_logger

logger = setup_logger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drivecode",
        description="""
        Driving-code IDM toolkit: ingest NGSIM scenes, fit IDM parameters by
        closed-loop rollout, predict parameters from short observation windows
        and benchmark every model on recorded traffic.
        """,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", type=Path, help="TOML configuration file")
    parser.add_argument("--seed", type=int, help="Seed of the deterministic restarts")
    parser.add_argument("--workers", type=int, help="Worker processes")
    parser.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    subparsers = parser.add_subparsers(dest="command", required=True, metavar="command")
    for command in COMMANDS:
        command.register(subparsers)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Parse arguments, dispatch the subcommand and translate failures to exit codes

    Returns:
        0 on success, 1 on pipeline errors, 2 on usage or configuration errors
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else 2

    logger.debug(f"Starting {settings.app_name} v{settings.app_version}: {args.command}")
    try:
        return args.handler(args)
    except Exception as e:
        return handle_exception(args.command, e)


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
