"""evaluate: benchmark table or ablation over a test scene"""

import argparse
from pathlib import Path

from app.cli.dependencies import (
    get_settings,
    get_store,
    parse_int_list,
    parse_methods,
    require_path,
)
from app.core.enums import Ablation
from app.services.evaluation import (
    DEFAULT_FRAMES,
    DEFAULT_KS,
    ablation_driving_code,
    ablation_frames,
    ablation_neighbors,
    run_benchmark,
    save_report,
)
from app.services.scene_data import load_scene
from app.utils.logger import setup_logger

logger = setup_logger(__name__)


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("evaluate", help="Roll out every method and write a report")
    parser.add_argument("--store", type=Path, help="KNN store")
    parser.add_argument("--test", type=Path, help="Test scene snapshot")
    parser.add_argument("--methods", help="Comma-separated subset of constvel,avg,pred,oracle")
    parser.add_argument("--ablation", choices=[a.value for a in Ablation], default="none")
    parser.add_argument("--frames", help="Observation windows for the frames ablation")
    parser.add_argument("--ks", help="Neighbor counts for the k ablation")
    parser.add_argument("--horizon", type=int, help="Frames per evaluated episode")
    parser.add_argument("--out", type=Path, help="Report file to write")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    config = get_settings(args, {
        "metrics": {"horizon": args.horizon},
        "paths": {"scene": args.test, "store": args.store, "report": args.out},
    })
    store = get_store(config.paths.store, config)
    scene = load_scene(require_path(config.paths.scene, "test"))

    ablation = Ablation(args.ablation)
    if ablation is Ablation.CODE:
        table, records = ablation_driving_code(store, scene, config)
    elif ablation is Ablation.FRAMES:
        frames = parse_int_list(args.frames, "frames") or DEFAULT_FRAMES
        table, records = ablation_frames(store, scene, config, frames)
    elif ablation is Ablation.NEIGHBORS:
        ks = parse_int_list(args.ks, "ks") or DEFAULT_KS
        table, records = ablation_neighbors(store, scene, config, ks)
    else:
        table, records = run_benchmark(store, scene, config, parse_methods(args.methods))

    out = config.paths.report or Path("report.csv")
    save_report(table, records, out, config)
    for row in table.rows:
        logger.info(
            f"{row.method}: n={row.n} ade={row.mean_ade:.2f}±{row.se_ade:.2f} "
            f"fde={row.mean_fde:.2f}±{row.se_fde:.2f} at_fault={row.at_fault_collisions}"
        )
    return 0
