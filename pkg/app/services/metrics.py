"""Displacement errors between a ground-truth and a modeled trajectory"""

import numpy as np

from app.core.enums import AdeNormalization
from app.core.exceptions import LengthMismatchException
from app.core.models import Trajectory


def _distances(truth: Trajectory, model: Trajectory) -> np.ndarray:
    if len(truth) != len(model):
        raise LengthMismatchException(
            "Trajectories must have the same number of frames",
            truth_length=len(truth),
            model_length=len(model),
        )
    diff = truth.positions - model.positions
    return np.hypot(diff[:, 0], diff[:, 1])


def ade(
    truth: Trajectory,
    model: Trajectory,
    normalization: AdeNormalization = AdeNormalization.POINTS,
) -> float:
    """
    Average displacement error

    The distance sum runs over every frame. POINTS divides by the number of
    frames, HORIZON by the number of steps (frames - 1).

    Raises:
        LengthMismatchException: Trajectories differ in length
    """
    distances = _distances(truth, model)
    divisor = len(distances) if normalization is AdeNormalization.POINTS else len(distances) - 1
    return float(distances.sum() / divisor)


def fde(truth: Trajectory, model: Trajectory) -> float:
    """Displacement at the final frame"""
    return float(_distances(truth, model)[-1])
