"""
Gaussian collision risk and reward feature maps

Each vehicle footprint is an oriented bivariate Gaussian. The risk between two
vehicles is the integral of the product of their densities, evaluated in
closed form with linear solves only.
"""

import math
from typing import Optional

import numpy as np
from scipy import linalg

from app.config import RiskSettings
from app.core.exceptions import InvalidScaleException, SingularCovarianceException
from app.core.models import (
    EllipseGaussian,
    LaneGeometry,
    RewardFeatures,
    RoadGeometry,
    VehicleGeometry,
    VehicleState,
    wrap_angle,
)


def ellipse_covariance(heading: float, L: float, W: float) -> np.ndarray:
    """
    Covariance R diag(L, W) R^T of an ellipse rotated by heading

    Raises:
        InvalidScaleException: L or W not strictly positive
    """
    if not (L > 0.0 and W > 0.0):
        raise InvalidScaleException(
            "Ellipse scales must be positive", length_scale=L, width_scale=W
        )
    c, s = math.cos(heading), math.sin(heading)
    rot = np.array([[c, -s], [s, c]])
    return rot @ np.diag([L, W]) @ rot.T


def gaussian_from_vehicle(
    state: VehicleState,
    geom: VehicleGeometry,
    config: Optional[RiskSettings] = None,
) -> EllipseGaussian:
    """Footprint Gaussian with one standard deviation spanning each half-extent"""
    config = config or RiskSettings()
    if config.length_scale <= 0.0 or config.width_scale <= 0.0:
        raise InvalidScaleException(
            "Risk scales must be positive",
            length_scale=config.length_scale,
            width_scale=config.width_scale,
        )
    return EllipseGaussian(
        mu=(state.x, state.y),
        tau_rot=state.psi,
        L=(0.5 * geom.length) ** 2 * config.length_scale,
        W=(0.5 * geom.width) ** 2 * config.width_scale,
    )


def _cho(matrix: np.ndarray) -> tuple:
    try:
        return linalg.cho_factor(matrix)
    except linalg.LinAlgError as e:
        raise SingularCovarianceException("Covariance is not positive definite", str(e))


def gaussian_overlap_risk(ego: EllipseGaussian, other: EllipseGaussian) -> float:
    """
    Integral over the plane of N(mu, Sigma) * N(theta, Gamma)

    With Omega = (Sigma^-1 + Gamma^-1)^-1 and combined mean
    Omega (Sigma^-1 mu + Gamma^-1 theta) the integral is
    sqrt|Omega| / (2 pi sqrt(|Sigma||Gamma|)) * exp(0.5 (v^T w - mu^T p - theta^T q)).
    Both means are shifted to their midpoint first.

    Raises:
        SingularCovarianceException: A covariance is not positive definite
    """
    sigma = ellipse_covariance(ego.tau_rot, ego.L, ego.W)
    gamma = ellipse_covariance(other.tau_rot, other.L, other.W)

    center = 0.5 * (np.asarray(ego.mu) + np.asarray(other.mu))
    mu = np.asarray(ego.mu) - center
    theta = np.asarray(other.mu) - center

    sigma_f = _cho(sigma)
    gamma_f = _cho(gamma)
    total_f = _cho(sigma + gamma)

    p = linalg.cho_solve(sigma_f, mu)
    q = linalg.cho_solve(gamma_f, theta)
    w = p + q
    # Omega = Sigma (Sigma + Gamma)^-1 Gamma
    combined_mean = sigma @ linalg.cho_solve(total_f, gamma @ w)

    det_sigma = np.linalg.det(sigma)
    det_gamma = np.linalg.det(gamma)
    det_omega = det_sigma * det_gamma / np.linalg.det(sigma + gamma)

    exponent = 0.5 * (combined_mean @ w - mu @ p - theta @ q)
    scale = math.sqrt(det_omega) / (2.0 * math.pi * math.sqrt(det_sigma * det_gamma))
    return float(scale * math.exp(exponent))


def reward_features(
    state: VehicleState,
    lane: LaneGeometry,
    road: RoadGeometry,
    geom: VehicleGeometry,
    others_states: np.ndarray,
    others_length: np.ndarray,
    others_width: np.ndarray,
    config: Optional[RiskSettings] = None,
) -> RewardFeatures:
    """
    Reward feature map of one vehicle in its scene context

    Args:
        state: Vehicle state
        lane: Lane the vehicle follows
        road: Road edges
        geom: Vehicle footprint
        others_states: (M, 4) states of the other vehicles, NaN rows ignored
        others_length: (M,) lengths
        others_width: (M,) widths
        config: Footprint scale multipliers

    Returns:
        Lane-center distance, distance to the nearest road edge, speed,
        heading error to the lane and summed Gaussian risk
    """
    arc, offset = lane.project_point(state.x, state.y)
    _, left = road.left_boundary.project_point(state.x, state.y)
    _, right = road.right_boundary.project_point(state.x, state.y)

    ego = gaussian_from_vehicle(state, geom, config)
    risk = 0.0
    for j in range(len(others_states)):
        x, y, psi, v = others_states[j]
        if not np.isfinite(x):
            continue
        other = gaussian_from_vehicle(
            VehicleState(x=x, y=y, psi=psi, v=max(v, 0.0)),
            VehicleGeometry.from_dimensions(float(others_length[j]), float(others_width[j])),
            config,
        )
        risk += gaussian_overlap_risk(ego, other)

    return RewardFeatures(
        lane_center_distance=abs(offset),
        road_boundary_distance=min(abs(left), abs(right)),
        speed=state.v,
        heading_error=wrap_angle(state.psi - lane.heading_at(arc)),
        collision_risk=risk,
    )
