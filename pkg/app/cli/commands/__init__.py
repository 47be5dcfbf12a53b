"""Subcommand modules; each exposes register(subparsers) and run(args)"""

from app.cli.commands import estimate, evaluate, ingest, predict, report, risk, rollout

COMMANDS = (ingest, estimate, predict, rollout, evaluate, report, risk)

__all__ = ["COMMANDS"]
