"""predict: driving-code KNN parameters for every vehicle of a scene"""

import argparse
from pathlib import Path

from app.cli.dependencies import get_settings, get_store, parse_features, require_path
from app.services.code_predictor import predict_all, save_predictions
from app.services.scene_data import load_scene
from app.utils.logger import setup_logger

logger = setup_logger(__name__)


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("predict", help="Predict IDM parameters from driving codes")
    parser.add_argument("--store", type=Path, help="KNN store")
    parser.add_argument("--scene", type=Path, help="Test scene snapshot")
    parser.add_argument("--frames", type=int, help="Observed frames per vehicle")
    parser.add_argument("--k", type=int, help="Number of neighbors")
    parser.add_argument("--features", help="Comma-separated subset of tau,nu,omega")
    parser.add_argument("--out", type=Path, help="Parameters file to write")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    config = get_settings(args, {
        "knn": {
            "observe_frames": args.frames,
            "k": args.k,
            "features": parse_features(args.features),
        },
        "paths": {"scene": args.scene, "store": args.store},
    })
    store = get_store(config.paths.store, config)
    scene = load_scene(require_path(config.paths.scene, "scene"))
    predictions, skipped = predict_all(store, scene, config)

    out = args.out or Path("params.csv")
    save_predictions(predictions, out, config)
    logger.info(f"Wrote {len(predictions)} predictions to {out}", extra={"skipped": len(skipped)})
    return 0
