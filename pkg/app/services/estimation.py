"""
Full-information IDM parameter fit

Parameters are chosen to minimize the rollout ADE against a vehicle's own
recorded trajectory with bounded L-BFGS-B and finite-difference gradients,
restarted from deterministic low-discrepancy points.
"""

from pathlib import Path
from typing import Iterable, Optional

import numpy as np
import pandas as pd
from scipy.optimize import minimize
from scipy.stats import qmc

from app.config import Settings
from app.core.exceptions import DriveCodeException
from app.core.models import (
    DrivingCode,
    Episode,
    FitResult,
    IdmGlobals,
    IdmParams,
    Scene,
    StoreEntry,
)
from app.services.code_predictor import PARAM_COLUMNS, vehicle_code
from app.services.metrics import ade, fde
from app.services.rollout import IdmController, rollout
from app.services.scene_data import episode_window
from app.utils.artifacts import read_table, run_header, write_table
from app.utils.logger import setup_logger
from app.utils.parallel import parallel_map, shared

logger = setup_logger(__name__)

CODE_COLUMNS = ("tau", "nu", "omega")


def halton_starts(n: int, seed: int = 0, dim: int = 5) -> np.ndarray:
    """First n points of the unscrambled Halton sequence after the origin, offset by seed"""
    if n <= 0:
        return np.empty((0, dim))
    sampler = qmc.Halton(d=dim, scramble=False)
    sampler.fast_forward(1 + seed)
    return sampler.random(n)


def rollout_errors(episode: Episode, params: IdmParams, config: Settings) -> tuple[float, float]:
    """ADE and FDE of an IDM rollout with the given parameters"""
    globals_ = IdmGlobals(v0=episode.v0, phi=config.idm.phi)
    result = rollout(
        episode,
        IdmController(params, globals_),
        config.pursuit,
        config.rollout,
        config.dynamics.substeps,
    )
    model = result.model_trajectory
    truth = episode.truth.window(0, len(model))
    return ade(truth, model, config.metrics.ade_normalization), fde(truth, model)


def fit_idm(
    episode: Episode,
    config: Optional[Settings] = None,
    population_mean: Optional[IdmParams] = None,
) -> FitResult:
    """
    Fit IDM parameters to one episode

    Args:
        episode: Ground-truth window with replayed traffic
        config: Bounds, optimizer options, rollout options and seed
        population_mean: First start; defaults to estimation.initial_params

    Returns:
        Best parameters over all starts; converged is False when no start
        reported success
    """
    config = config or Settings()
    est = config.estimation
    bounds = config.idm.bounds
    lower, width = bounds.lower(), bounds.width()

    def to_params(u: np.ndarray) -> IdmParams:
        return IdmParams.from_array(lower + np.clip(u, 0.0, 1.0) * width)

    def objective(u: np.ndarray) -> float:
        return rollout_errors(episode, to_params(u), config)[0]

    first = bounds.clip(population_mean or est.initial_params).to_array()
    starts = np.vstack(((first - lower) / width, halton_starts(est.restarts, config.seed)))

    best_u, best_ade = starts[0], np.inf
    converged = False
    used = 0
    for u0 in starts:
        used += 1
        start_ade = objective(u0)
        if start_ade < best_ade:
            best_u, best_ade = u0, start_ade

        res = minimize(
            objective,
            u0,
            method="L-BFGS-B",
            jac="3-point",
            bounds=[(0.0, 1.0)] * len(u0),
            options={
                "maxiter": est.max_iter,
                "ftol": est.ftol,
                "gtol": est.gtol,
                "finite_diff_rel_step": est.fd_step,
            },
        )
        converged = converged or bool(res.success)
        if res.fun < best_ade:
            best_u, best_ade = np.clip(res.x, 0.0, 1.0), float(res.fun)
        if best_ade <= est.early_stop_ade:
            break

    params = to_params(best_u)
    final_ade, final_fde = rollout_errors(episode, params, config)
    logger.debug(
        f"Fitted vehicle {episode.vehicle_id}",
        extra={"ade": final_ade, "starts": used, "converged": converged},
    )
    return FitResult(
        params=params, ade=final_ade, fde=final_fde, n_restarts_used=used, converged=converged
    )


def _fit_training_vehicle(vehicle_id: int) -> tuple[int, Optional[StoreEntry], Optional[str]]:
    state = shared()
    scene: Scene = state["scene"]
    config: Settings = state["config"]
    try:
        episode = episode_window(
            scene,
            vehicle_id,
            config.estimation.horizon,
            headway_source=config.ingest.headway_source,
        )
        fit = fit_idm(episode, config)
        code = vehicle_code(scene, vehicle_id, None, config.knn, config.ingest.headway_source)
    except DriveCodeException as e:
        return vehicle_id, None, e.message
    return vehicle_id, StoreEntry(vehicle_id=vehicle_id, params=fit.params, code=code), None


def fit_training_set(
    scene: Scene,
    config: Optional[Settings] = None,
    vehicle_ids: Optional[Iterable[int]] = None,
) -> list[StoreEntry]:
    """
    Fit every eligible training vehicle and pair it with its whole-trajectory code

    Vehicles shorter than the estimation horizon or failing otherwise are
    logged and skipped. Entries come back ordered by vehicle id.
    """
    config = config or Settings()
    ids = sorted(vehicle_ids if vehicle_ids is not None else scene.vehicle_ids)
    logger.info(f"Fitting {len(ids)} training vehicles", extra={"workers": config.workers})

    results = parallel_map(
        _fit_training_vehicle, ids, config.workers, {"scene": scene, "config": config}
    )
    entries = []
    for vehicle_id, entry, reason in results:
        if entry is None:
            logger.warning(f"Skipping vehicle {vehicle_id}: {reason}")
            continue
        entries.append(entry)
    logger.info(f"Store holds {len(entries)} entries")
    return entries


def save_store(entries: list[StoreEntry], path: Path, config: Optional[Settings] = None) -> Path:
    """Write the KNN store, one row per training vehicle"""
    rows = [
        [e.vehicle_id, *e.params.to_array(), *e.code.to_array()]
        for e in sorted(entries, key=lambda e: e.vehicle_id)
    ]
    frame = pd.DataFrame(rows, columns=["vehicle_id", *PARAM_COLUMNS, *CODE_COLUMNS])
    frame["vehicle_id"] = frame["vehicle_id"].astype(np.int64)
    return write_table(path, "store", frame, run_header(config))


def load_store(path: Path) -> list[StoreEntry]:
    """Read entries written by save_store"""
    _, frame = read_table(path, "store")
    return [
        StoreEntry(
            vehicle_id=int(row.vehicle_id),
            params=IdmParams.from_array([getattr(row, c) for c in PARAM_COLUMNS]),
            code=DrivingCode.from_array([getattr(row, c) for c in CODE_COLUMNS]),
        )
        for row in frame.itertuples(index=False)
    ]
