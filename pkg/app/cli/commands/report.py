"""report: render a saved report as markdown or CSV"""

import argparse
import sys
from pathlib import Path

from app.cli.dependencies import get_settings, require_path
from app.core.enums import ReportFormat
from app.services.evaluation import load_report, render_markdown, report_frame
from app.utils.artifacts import FLOAT_FORMAT


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("report", help="Render a report table")
    parser.add_argument("--input", type=Path, help="Report written by evaluate")
    parser.add_argument("--format", choices=[f.value for f in ReportFormat], default="md")
    parser.add_argument("--out", type=Path, help="Destination; standard output when omitted")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    config = get_settings(args, {"paths": {"report": args.input}})
    table = load_report(require_path(config.paths.report, "input"))

    if ReportFormat(args.format) is ReportFormat.MARKDOWN:
        text = render_markdown(table)
    else:
        text = report_frame(table).to_csv(
            index=False, float_format=FLOAT_FORMAT, lineterminator="\n"
        )

    if args.out is None:
        sys.stdout.write(text)
    else:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(text, encoding="utf-8")
    return 0
