"""
Closed-loop rollout of one modeled vehicle inside a recorded scene

The modeled vehicle is driven by a controller while every other vehicle
replays its recording. Leads are resolved from lane occupancy at each step.
"""

import math
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from app.config import RolloutSettings, Settings
from app.core.enums import ControllerKind, TerminationReason
from app.core.exceptions import LaneExhaustedException
from app.core.models import (
    Episode,
    IdmGlobals,
    IdmParams,
    PurePursuitConfig,
    RolloutResult,
    Trajectory,
    VehicleGeometry,
    VehicleState,
    wrap_angle,
)
from app.services.dynamics import bicycle_values, pursuit_values
from app.services.idm import accel_from_values
from app.utils.artifacts import read_table, run_header, write_table


class Controller(ABC):
    """Acceleration policy of the modeled vehicle"""

    # Whether the rollout resolves a lead for this controller
    uses_lead: bool = True
    # Whether steering comes from pure pursuit when steering() returns None
    lane_keeping: bool = True

    @abstractmethod
    def acceleration(
        self, step: int, v: float, dv: float, gap: Optional[float], dt: float
    ) -> float:
        """Acceleration at a step given own speed, approach rate and gap (None: free road)"""

    def steering(self, step: int) -> Optional[float]:
        return None


class IdmController(Controller):
    """IDM acceleration with pure-pursuit lane keeping"""

    def __init__(self, params: IdmParams, globals_: IdmGlobals):
        self.params = params
        self.globals_ = globals_
        self._values = (params.a, params.b, params.T_headway, params.d0, params.d1,
                        globals_.v0, globals_.phi)

    def acceleration(
        self, step: int, v: float, dv: float, gap: Optional[float], dt: float
    ) -> float:
        return accel_from_values(*self._values, v, dv, gap, dt)


class ConstantVelocityController(Controller):
    """Zero input action: no acceleration and no steering"""
    uses_lead = False
    lane_keeping = False

    def acceleration(
        self, step: int, v: float, dv: float, gap: Optional[float], dt: float
    ) -> float:
        return 0.0

    def steering(self, step: int) -> Optional[float]:
        return 0.0


class ReplayController(Controller):
    """Open-loop replay of a fixed control sequence"""
    uses_lead = False
    lane_keeping = False

    def __init__(self, accels: np.ndarray, deltas: np.ndarray):
        self.accels = np.asarray(accels, dtype=float)
        self.deltas = np.asarray(deltas, dtype=float)

    def acceleration(
        self, step: int, v: float, dv: float, gap: Optional[float], dt: float
    ) -> float:
        return float(self.accels[step])

    def steering(self, step: int) -> Optional[float]:
        return float(self.deltas[step])

    @classmethod
    def from_trajectory(cls, trajectory: Trajectory, geom: VehicleGeometry) -> "ReplayController":
        """
        Solve the bicycle model backwards for the controls that reproduce a trajectory

        Acceleration comes from the speed difference, the slip angle from the yaw
        change. Standing frames get zero steering.
        """
        states = trajectory.states
        dt = trajectory.dt
        wheelbase = geom.lf + geom.lr
        accels = np.diff(states[:, 3]) / dt
        deltas = np.zeros(len(accels))
        for i in range(len(accels)):
            v = states[i, 3]
            if v <= 1e-9:
                continue
            dpsi = wrap_angle(states[i + 1, 2] - states[i, 2])
            sin_beta = min(1.0, max(-1.0, geom.lr * dpsi / (v * dt)))
            beta = math.asin(sin_beta)
            deltas[i] = math.atan(math.tan(beta) * wheelbase / geom.lr)
        return cls(accels, deltas)


def build_controller(
    kind: ControllerKind,
    params: Optional[IdmParams] = None,
    globals_: Optional[IdmGlobals] = None,
) -> Controller:
    """Controller selected by name; IDM requires parameters"""
    if kind is ControllerKind.CONSTVEL:
        return ConstantVelocityController()
    if params is None:
        raise ValueError("IDM controller requires parameters")
    return IdmController(params, globals_ or IdmGlobals())


def rectangle_corners(x: float, y: float, psi: float, length: float, width: float) -> np.ndarray:
    """Corners of an oriented rectangle centered at (x, y), shape (4, 2)"""
    c, s = math.cos(psi), math.sin(psi)
    rot = np.array([[c, -s], [s, c]])
    half = np.array([
        [length / 2, width / 2],
        [length / 2, -width / 2],
        [-length / 2, -width / 2],
        [-length / 2, width / 2],
    ])
    return half @ rot.T + np.array([x, y])


def rectangles_overlap(corners_a: np.ndarray, corners_b: np.ndarray) -> bool:
    """Separating-axis test for two convex quadrilaterals; touching counts as overlap"""
    for corners in (corners_a, corners_b):
        for i in range(2):
            edge = corners[i + 1] - corners[i]
            axis = np.array([-edge[1], edge[0]])
            proj_a = corners_a @ axis
            proj_b = corners_b @ axis
            if proj_a.max() < proj_b.min() or proj_b.max() < proj_a.min():
                return False
    return True


def detect_collision(
    state: VehicleState,
    geom: VehicleGeometry,
    others_ids: np.ndarray,
    others_states: np.ndarray,
    others_length: np.ndarray,
    others_width: np.ndarray,
    lane_heading: Optional[float] = None,
) -> Optional[tuple[int, bool]]:
    """
    First replayed vehicle overlapping the modeled footprint

    Candidates are checked in order of center distance. The modeled vehicle is
    at fault when the other center lies ahead along the lane direction.

    Args:
        state: Modeled vehicle state
        geom: Modeled vehicle footprint
        others_ids: (M,) ids of replayed vehicles
        others_states: (M, 4) states at the same frame, NaN rows for absent vehicles
        others_length: (M,) lengths
        others_width: (M,) widths
        lane_heading: Lane direction; defaults to the modeled heading

    Returns:
        (other_id, at_fault) or None
    """
    if len(others_ids) == 0:
        return None

    offsets = others_states[:, :2] - np.array([state.x, state.y])
    distance = np.hypot(offsets[:, 0], offsets[:, 1])
    reach = 0.5 * (math.hypot(geom.length, geom.width) + np.hypot(others_length, others_width))
    candidates = np.flatnonzero(distance <= reach)
    if not len(candidates):
        return None

    own = rectangle_corners(state.x, state.y, state.psi, geom.length, geom.width)
    heading = state.psi if lane_heading is None else lane_heading
    direction = np.array([math.cos(heading), math.sin(heading)])
    for j in candidates[np.argsort(distance[candidates], kind="stable")]:
        x, y, psi, _ = others_states[j]
        other = rectangle_corners(x, y, psi, others_length[j], others_width[j])
        if rectangles_overlap(own, other):
            return int(others_ids[j]), bool(offsets[j] @ direction > 0.0)
    return None


def _current_lane(episode: Episode, x: float, y: float) -> int:
    """Index of the lane whose centerline is nearest to (x, y)"""
    best, best_offset = 0, math.inf
    for k, lane in enumerate(episode.lanes):
        _, offset = lane.project_point(x, y)
        if abs(offset) < best_offset:
            best, best_offset = k, abs(offset)
    return best


def rollout(
    episode: Episode,
    controller: Controller,
    cfg: Optional[PurePursuitConfig] = None,
    settings: Optional[RolloutSettings] = None,
    substeps: int = 1,
) -> RolloutResult:
    """
    Simulate the modeled vehicle through the episode horizon

    Each step resolves the nearest replayed vehicle ahead in the current lane,
    asks the controller for an acceleration, steers toward the initial lane,
    integrates the bicycle model and checks for collisions at the next frame.

    Args:
        episode: Ground truth and replayed traffic
        controller: Acceleration policy
        cfg: Pure-pursuit gains
        settings: Collision handling and gap floor
        substeps: Euler substeps per frame

    Returns:
        Rollout outcome; after a collision or lane exhaustion the remaining frames
        hold the last pose at zero speed unless stop_on_collision truncates them
    """
    cfg = cfg or PurePursuitConfig()
    settings = settings or RolloutSettings()
    truth = episode.truth
    n, dt = len(truth), truth.dt
    geom = episode.geometry
    lf, lr, half_length = geom.lf, geom.lr, 0.5 * geom.length
    h = dt / substeps

    states = np.empty((n, 4))
    x0, y0, psi0, v0 = truth.states[0]
    states[0] = (x0, y0, wrap_angle(psi0), max(v0, 0.0))

    collided = at_fault = False
    collision_frame = collided_with = None
    reason: Optional[TerminationReason] = None
    last = n - 1

    for i in range(n - 1):
        x, y, psi, v = states[i]

        gap, lead_speed = None, v
        if controller.uses_lead and len(episode.others_ids):
            k = _current_lane(episode, x, y)
            lane = episode.lanes[k]
            own_arc, _ = lane.project_point(x, y)
            arcs = episode.others_arc(k)[:, i]
            ahead = (episode.others_lane_ids[:, i] == lane.lane_id) & (arcs > own_arc)
            if ahead.any():
                candidates = np.flatnonzero(ahead)
                j = candidates[np.argmin(arcs[candidates])]
                gap = (arcs[j] - 0.5 * episode.others_length[j]) - (own_arc + half_length)
                gap = max(gap, settings.min_gap)
                lead_speed = episode.others_states[j, i, 3]

        accel = controller.acceleration(i, v, v - lead_speed, gap, dt)
        delta = controller.steering(i)
        if delta is None and not controller.lane_keeping:
            delta = 0.0
        elif delta is None:
            try:
                delta = pursuit_values(x, y, psi, v, episode.lane, lf + lr, cfg)
            except LaneExhaustedException:
                reason = TerminationReason.LANE_EXHAUSTED
                last = i
                break

        values = (x, y, psi, v)
        for _ in range(substeps):
            values = bicycle_values(*values, accel, delta, lf, lr, h)
        states[i + 1] = values

        hit = detect_collision(
            VehicleState(x=values[0], y=values[1], psi=values[2], v=values[3]),
            geom,
            episode.others_ids,
            episode.others_states[:, i + 1],
            episode.others_length,
            episode.others_width,
            episode.lane.heading_at(episode.lane.project_point(values[0], values[1])[0]),
        )
        if hit is not None:
            collided = True
            collided_with, at_fault = hit
            collision_frame = int(truth.frames[i + 1])
            reason = TerminationReason.COLLISION
            last = i + 1
            break

    if last < n - 1:
        if settings.stop_on_collision:
            keep = max(last + 1, 2)
            states = states[:keep]
            if last == 0:
                states[1] = states[0]
                states[1, 3] = 0.0
        else:
            states[last + 1:] = states[last]
            states[last + 1:, 3] = 0.0

    model = Trajectory(
        vehicle_id=episode.vehicle_id,
        frames=truth.frames[:len(states)],
        states=states,
        dt=dt,
    )
    return RolloutResult(
        model_trajectory=model,
        collided=collided,
        at_fault=at_fault,
        collision_frame=collision_frame,
        collided_with=collided_with,
        terminated_early=reason is TerminationReason.LANE_EXHAUSTED,
        termination_reason=reason,
    )


def save_trajectory(
    result: RolloutResult,
    path: Path,
    config: Optional[Settings] = None,
) -> Path:
    """Write a rollout trajectory with its outcome flags in the header"""
    traj = result.model_trajectory
    frame = {
        "frame": traj.frames,
        "x": traj.states[:, 0],
        "y": traj.states[:, 1],
        "psi": traj.states[:, 2],
        "v": traj.states[:, 3],
    }
    header = {
        "vehicle_id": str(traj.vehicle_id),
        "dt": repr(traj.dt),
        "collided": result.collided,
        "at_fault": result.at_fault,
        "collision_frame": result.collision_frame,
        "collided_with": result.collided_with,
        "termination_reason": (
            result.termination_reason.value if result.termination_reason else None
        ),
        **run_header(config),
    }
    return write_table(path, "trajectory", pd.DataFrame(frame), header)


def load_trajectory(path: Path) -> Trajectory:
    """Read the trajectory part of a file written by save_trajectory"""
    header, frame = read_table(path, "trajectory")
    return Trajectory(
        vehicle_id=int(header["vehicle_id"]),
        frames=frame["frame"].to_numpy(),
        states=frame[["x", "y", "psi", "v"]].to_numpy(),
        dt=float(header["dt"]),
    )
