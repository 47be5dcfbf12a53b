"""Kinematic bicycle transition and pure-pursuit lane keeping"""

import math

from app.core.exceptions import LaneExhaustedException
from app.core.models import (
    ControlInput,
    LaneGeometry,
    PurePursuitConfig,
    VehicleGeometry,
    VehicleState,
    wrap_angle,
)


def bicycle_values(
    x: float, y: float, psi: float, v: float,
    accel: float, delta: float,
    lf: float, lr: float, dt: float,
) -> tuple[float, float, float, float]:
    """One explicit Euler step of the kinematic bicycle on plain floats"""
    beta = math.atan(lr / (lf + lr) * math.tan(delta))
    x_next = x + v * math.cos(psi + beta) * dt
    y_next = y + v * math.sin(psi + beta) * dt
    psi_next = psi + (v / lr) * math.sin(beta) * dt
    v_next = v + accel * dt
    return x_next, y_next, wrap_angle(psi_next), v_next if v_next > 0.0 else 0.0


def bicycle_step(
    state: VehicleState,
    control: ControlInput,
    geom: VehicleGeometry,
    dt: float,
) -> VehicleState:
    """
    Advance a vehicle by one step of the kinematic bicycle model

    Args:
        state: Current state
        control: Acceleration and steering angle
        geom: Axle distances
        dt: Step length (s), positive

    Returns:
        Next state; speed never drops below zero
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    x, y, psi, v = bicycle_values(
        state.x, state.y, state.psi, state.v, control.accel, control.delta, geom.lf, geom.lr, dt
    )
    return VehicleState(x=x, y=y, psi=psi, v=v)


def integrate(
    state: VehicleState,
    control: ControlInput,
    geom: VehicleGeometry,
    dt: float,
    substeps: int = 1,
) -> VehicleState:
    """Hold a control for dt using `substeps` Euler substeps"""
    values = state.as_tuple()
    h = dt / substeps
    for _ in range(substeps):
        values = bicycle_values(*values, control.accel, control.delta, geom.lf, geom.lr, h)
    x, y, psi, v = values
    return VehicleState(x=x, y=y, psi=psi, v=v)


def pursuit_values(
    x: float, y: float, psi: float, v: float,
    lane: LaneGeometry,
    wheelbase: float,
    cfg: PurePursuitConfig,
) -> float:
    """Pure-pursuit steering angle on plain floats"""
    lookahead = max(cfg.ld_min, cfg.t_lookahead * v)
    arc, _ = lane.project_point(x, y)
    target_arc = arc + lookahead
    if target_arc > lane.length:
        raise LaneExhaustedException(
            "Lookahead point beyond the end of the lane",
            lane_id=lane.lane_id,
            arc_length=target_arc,
            lane_length=lane.length,
        )

    tx, ty = lane.point_at(target_arc)
    alpha = wrap_angle(math.atan2(ty - y, tx - x) - psi)
    delta = math.atan2(2.0 * wheelbase * math.sin(alpha), lookahead)
    return max(-cfg.delta_max, min(cfg.delta_max, delta))


def pure_pursuit_steer(
    state: VehicleState,
    lane: LaneGeometry,
    geom: VehicleGeometry,
    cfg: PurePursuitConfig,
) -> float:
    """
    Steering that chases a lookahead point on the lane centerline

    The lookahead distance is max(ld_min, t_lookahead * v), measured along the
    centerline from the vehicle's projection.

    Raises:
        LaneExhaustedException: The lookahead point lies past the end of the centerline
    """
    return pursuit_values(state.x, state.y, state.psi, state.v, lane, geom.lf + geom.lr, cfg)
