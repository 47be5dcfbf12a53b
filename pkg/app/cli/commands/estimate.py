"""estimate: full-information fit of every training vehicle into a KNN store"""

import argparse
from pathlib import Path

from app.cli.dependencies import get_settings, parse_bounds, parse_int_list, require_path
from app.services.estimation import fit_training_set, save_store
from app.services.scene_data import load_scene
from app.utils.logger import setup_logger

logger = setup_logger(__name__)


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("estimate", help="Fit IDM parameters and build the KNN store")
    parser.add_argument("--scene", type=Path, help="Training scene snapshot")
    parser.add_argument("--out", type=Path, help="KNN store to write")
    parser.add_argument("--bounds", type=Path, help="JSON file of parameter bounds")
    parser.add_argument("--restarts", type=int, help="Low-discrepancy restarts per vehicle")
    parser.add_argument("--horizon", type=int, help="Frames per fitted episode")
    parser.add_argument("--vehicles", help="Subset of vehicle ids, e.g. 1..20,31")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    config = get_settings(args, {
        "idm": {"bounds": parse_bounds(args.bounds)},
        "estimation": {"restarts": args.restarts, "horizon": args.horizon},
        "paths": {"scene": args.scene, "store": args.out},
    })
    scene = load_scene(require_path(config.paths.scene, "scene"))
    entries = fit_training_set(scene, config, parse_int_list(args.vehicles, "vehicles"))

    out = config.paths.store or Path("store.csv")
    save_store(entries, out, config)
    logger.info(f"Wrote {len(entries)} store entries to {out}")
    return 0
