"""ingest: raw NGSIM table to cleaned scene snapshot"""

import argparse
from pathlib import Path

from app.cli.dependencies import get_settings, parse_int_list, require_path
from app.core.enums import Units
from app.services.scene_data import hygiene_filter, ingest_ngsim, save_scene
from app.utils.logger import setup_logger

logger = setup_logger(__name__)


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("ingest", help="Convert an NGSIM table into a scene snapshot")
    parser.add_argument("--input", type=Path, required=True, help="NGSIM trajectory CSV")
    parser.add_argument("--out", type=Path, help="Scene snapshot to write")
    parser.add_argument("--lanes", help="Mainline lane ids, e.g. 1..5 or 1,2,4")
    parser.add_argument("--units", choices=[u.value for u in Units])
    parser.add_argument("--location", help="Keep only rows of this Location")
    parser.add_argument("--lane-file", type=Path, help="JSON centerlines instead of estimated ones")
    parser.add_argument("--no-filter", action="store_true", help="Skip the hygiene filter")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    config = get_settings(args, {
        "ingest": {
            "lanes": parse_int_list(args.lanes, "lanes"),
            "units": args.units,
            "location": args.location,
            "lane_file": args.lane_file,
        },
        "paths": {"scene": args.out},
    })
    scene = ingest_ngsim(require_path(args.input, "input"), config.ingest, dt=config.dt)

    if not args.no_filter:
        scene, report = hygiene_filter(scene)
        logger.info(
            f"Retained {len(report.retained)} of {report.ingested} vehicles",
            extra={"removed": len(report.removed)},
        )

    out = config.paths.scene or Path("scene.csv")
    save_scene(scene, out, config)
    logger.info(f"Wrote scene to {out}")
    return 0
