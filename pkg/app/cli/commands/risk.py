"""risk: Gaussian overlap risk between two ellipses"""

import argparse
import sys

from app.cli.dependencies import get_settings, parse_ellipse
from app.services.risk import gaussian_overlap_risk


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("risk", help="Print the overlap risk of two footprints")
    parser.add_argument(
        "--ego", required=True, help='JSON, e.g. {"mu": [0, 0], "tau_rot": 0, "L": 4, "W": 1}'
    )
    parser.add_argument("--other", required=True, help="JSON of the second ellipse")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    get_settings(args)
    ego = parse_ellipse(args.ego, "ego")
    other = parse_ellipse(args.other, "other")
    value = gaussian_overlap_risk(ego, other)
    sys.stdout.write(f"{value:.17g}\n")
    return 0
