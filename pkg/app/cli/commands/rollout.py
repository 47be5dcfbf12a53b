"""rollout: simulate one vehicle of a scene and write its trajectory"""

import argparse
from pathlib import Path

from app.cli.dependencies import get_settings, parse_params, require_path
from app.core.enums import ControllerKind
from app.core.exceptions import ConfigurationException
from app.core.models import IdmGlobals
from app.services.metrics import ade, fde
from app.services.rollout import build_controller, rollout, save_trajectory
from app.services.scene_data import episode_window, load_scene
from app.utils.logger import setup_logger

logger = setup_logger(__name__)


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("rollout", help="Closed-loop rollout of a single vehicle")
    parser.add_argument("--scene", type=Path, help="Scene snapshot")
    parser.add_argument("--vehicle", type=int, required=True, help="Modeled vehicle id")
    parser.add_argument("--controller", choices=[c.value for c in ControllerKind], default="idm")
    parser.add_argument("--params", help="IDM parameters as JSON or a JSON file")
    parser.add_argument("--horizon", type=int, help="Frames to simulate")
    parser.add_argument("--start", type=int, default=0, help="Offset of the first frame")
    parser.add_argument("--out", type=Path, help="Trajectory file to write")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    config = get_settings(args, {
        "metrics": {"horizon": args.horizon},
        "paths": {"scene": args.scene},
    })
    kind = ControllerKind(args.controller)
    if kind is ControllerKind.IDM and args.params is None:
        raise ConfigurationException("The idm controller needs --params", config_key="params")

    scene = load_scene(require_path(config.paths.scene, "scene"))
    if args.vehicle not in scene.vehicles:
        raise ConfigurationException("Vehicle not in scene", config_key="vehicle",
                                     config_value=args.vehicle)

    episode = episode_window(scene, args.vehicle, config.metrics.horizon, args.start,
                             config.ingest.headway_source)
    params = parse_params(args.params) if args.params is not None else None
    controller = build_controller(kind, params, IdmGlobals(v0=episode.v0, phi=config.idm.phi))
    result = rollout(episode, controller, config.pursuit, config.rollout, config.dynamics.substeps)

    model = result.model_trajectory
    truth = episode.truth.window(0, len(model))
    logger.info(
        f"Vehicle {args.vehicle}: "
        f"ade={ade(truth, model, config.metrics.ade_normalization):.3f} "
        f"fde={fde(truth, model):.3f} at_fault={result.at_fault}"
    )
    out = args.out or Path(f"trajectory_{args.vehicle}.csv")
    save_trajectory(result, out, config)
    return 0
