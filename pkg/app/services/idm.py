"""Intelligent Driver Model acceleration law"""

import math
from typing import Optional

from app.core.exceptions import InvalidGapException
from app.core.models import IdmGlobals, IdmParams, IdmState


def _desired_gap(a: float, b: float, t: float, d0: float, d1: float, v0: float,
                 v: float, dv: float) -> float:
    raw = d0 + d1 * math.sqrt(v / v0) + t * v + v * dv / (2.0 * math.sqrt(a * b))
    return raw if raw > 0.0 else 0.0


def accel_from_values(
    a: float, b: float, t: float, d0: float, d1: float,
    v0: float, phi: float,
    v: float, dv: float, d: Optional[float],
    dt: Optional[float] = None,
) -> float:
    """
    Scalar IDM law used inside rollout loops

    d=None (or +inf) drops the interaction term. When dt is given the result is
    clamped so that v + accel * dt never goes negative.
    """
    free = (v / v0) ** phi
    if d is None or math.isinf(d):
        interaction = 0.0
    else:
        if d <= 0.0:
            raise InvalidGapException("Gap to the lead must be positive", gap=d)
        interaction = (_desired_gap(a, b, t, d0, d1, v0, v, dv) / d) ** 2

    accel = a * (1.0 - free - interaction)
    if dt is not None and v + accel * dt < 0.0:
        accel = -v / dt
    return accel


def desired_gap(params: IdmParams, globals_: IdmGlobals, v: float, dv: float) -> float:
    """
    Desired minimum gap d*(v, dv), clamped at zero

    Args:
        params: Driver parameters
        globals_: Scene constants
        v: Own speed (m/s)
        dv: Approach rate v - v_lead (m/s)

    Returns:
        Desired gap in meters
    """
    return _desired_gap(
        params.a, params.b, params.T_headway, params.d0, params.d1, globals_.v0, v, dv
    )


def idm_accel(
    params: IdmParams,
    globals_: IdmGlobals,
    state: IdmState,
    dt: Optional[float] = None,
) -> float:
    """
    IDM acceleration a * (1 - (v/v0)^phi - (d*/d)^2)

    Args:
        params: Driver parameters
        globals_: Scene constants
        state: Own speed, approach rate and gap (None for a free road)
        dt: Step length; when given the result keeps the next speed non-negative

    Returns:
        Acceleration in m/s^2

    Raises:
        InvalidGapException: Gap is not positive while a lead exists
    """
    return accel_from_values(
        params.a, params.b, params.T_headway, params.d0, params.d1,
        globals_.v0, globals_.phi,
        state.v, state.dv, state.d, dt,
    )


def equilibrium_gap(params: IdmParams, globals_: IdmGlobals, v: float) -> float:
    """Steady-state gap behind a lead driving at the same speed v < v0"""
    free = (v / globals_.v0) ** globals_.phi
    if free >= 1.0:
        return math.inf
    return desired_gap(params, globals_, v, 0.0) / math.sqrt(1.0 - free)
