"""Core module initialization"""

from app.core.enums import CodeFeature, FilterReason, HeadwaySource, Method, SpeedFeature, Units

from app.core.models import (
    DrivingCode,
    EllipseGaussian,
    Episode,
    FitResult,
    IdmGlobals,
    IdmParams,
    LaneGeometry,
    RolloutResult,
    Scene,
    Trajectory,
    VehicleGeometry,
    VehicleState,
)

from app.core.exceptions import (
    DriveCodeException,
    SchemaException,
    InsufficientLengthException,
    LaneExhaustedException,
    ConfigurationException,
)

__all__ = [
    "CodeFeature",
    "FilterReason",
    "HeadwaySource",
    "Method",
    "SpeedFeature",
    "Units",
    "DrivingCode",
    "EllipseGaussian",
    "Episode",
    "FitResult",
    "IdmGlobals",
    "IdmParams",
    "LaneGeometry",
    "RolloutResult",
    "Scene",
    "Trajectory",
    "VehicleGeometry",
    "VehicleState",
    "DriveCodeException",
    "SchemaException",
    "InsufficientLengthException",
    "LaneExhaustedException",
    "ConfigurationException",
]
