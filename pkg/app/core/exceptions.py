"""Custom exception definitions with detailed error handling"""

from typing import Any, Dict, Optional

EXIT_PIPELINE_ERROR = 1
EXIT_USAGE_ERROR = 2


class DriveCodeException(Exception):
    """
    Base exception for the driving-code toolkit
    All custom exceptions inherit from this class
    """

    def __init__(
        self,
        message: str,
        exit_code: int = EXIT_PIPELINE_ERROR,
        details: Optional[Dict[str, Any]] = None
    ):
        """
        Initialize base exception

        Args:
            message: Human-readable error message
            exit_code: Process exit code reported by the command line
            details: Additional error details
        """
        self.message = message
        self.exit_code = exit_code
        self.details = details or {}
        super().__init__(self.message)

    def to_dict(self) -> Dict[str, Any]:
        """
        Convert exception to dictionary for structured error output

        Returns:
            Dictionary with error information
        """
        return {
            "error": self.__class__.__name__,
            "message": self.message,
            "exit_code": self.exit_code,
            **self.details
        }


class SchemaException(DriveCodeException):
    """
    Raised when a trajectory table lacks required columns

    Examples:
        - NGSIM export without Preceding
        - Truncated header row
    """

    def __init__(
        self,
        message: str,
        missing_columns: Optional[list[str]] = None,
        source: Optional[str] = None,
        details: Optional[Dict[str, Any]] = None
    ):
        error_details = details or {}

        if missing_columns:
            error_details["missing_columns"] = sorted(missing_columns)
        if source:
            error_details["source"] = source

        super().__init__(message=message, details=error_details)


class EmptySceneException(DriveCodeException):
    """Raised when no mainline vehicle survives ingestion"""

    def __init__(self, message: str, lanes: Optional[list[int]] = None):
        super().__init__(message=message, details={"lanes": lanes} if lanes else None)


class InsufficientLengthException(DriveCodeException):
    """
    Raised when a trajectory is shorter than the requested window

    Examples:
        - 100-frame episode requested for a 60-frame vehicle
    """

    def __init__(
        self,
        message: str,
        vehicle_id: Optional[int] = None,
        available: Optional[int] = None,
        required: Optional[int] = None,
    ):
        error_details: Dict[str, Any] = {}

        if vehicle_id is not None:
            error_details["vehicle_id"] = vehicle_id
        if available is not None:
            error_details["available_frames"] = available
        if required is not None:
            error_details["required_frames"] = required

        super().__init__(message=message, details=error_details)


class InvalidGapException(DriveCodeException):
    """Raised when IDM receives a non-positive gap to an existing lead"""

    def __init__(self, message: str, gap: Optional[float] = None):
        super().__init__(message=message, details={"gap": gap} if gap is not None else None)


class LaneExhaustedException(DriveCodeException):
    """
    Raised when the lookahead point falls beyond the end of a lane centerline

    The rollout catches it and terminates the episode gracefully.
    """

    def __init__(
        self,
        message: str,
        lane_id: Optional[int] = None,
        arc_length: Optional[float] = None,
        lane_length: Optional[float] = None,
    ):
        error_details: Dict[str, Any] = {}

        if lane_id is not None:
            error_details["lane_id"] = lane_id
        if arc_length is not None:
            error_details["arc_length"] = arc_length
        if lane_length is not None:
            error_details["lane_length"] = lane_length

        super().__init__(message=message, details=error_details)


class LengthMismatchException(DriveCodeException):
    """Raised when two trajectories compared point-wise differ in length"""

    def __init__(self, message: str, truth_length: int, model_length: int):
        super().__init__(
            message=message,
            details={"truth_length": truth_length, "model_length": model_length}
        )


class EmptyWindowException(DriveCodeException):
    """Raised when a driving-code window is shorter than two frames or lacks lead data"""

    def __init__(self, message: str, frames: Optional[int] = None):
        super().__init__(
            message=message, details={"frames": frames} if frames is not None else None
        )


class EmptyStoreException(DriveCodeException):
    """Raised when predicting from a KNN store without entries"""

    def __init__(self, message: str = "KNN store is empty"):
        super().__init__(message=message)


class NeighborCountException(DriveCodeException):
    """Raised when more neighbors are requested than the store holds"""

    def __init__(self, message: str, k: int, store_size: int):
        super().__init__(message=message, details={"k": k, "store_size": store_size})


class InvalidScaleException(DriveCodeException):
    """Raised when an ellipse scale is not strictly positive"""

    def __init__(self, message: str, length_scale: float, width_scale: float):
        super().__init__(
            message=message,
            details={"length_scale": length_scale, "width_scale": width_scale}
        )


class SingularCovarianceException(DriveCodeException):
    """Raised when a Gaussian footprint covariance is not positive definite"""

    def __init__(self, message: str, linalg_error: Optional[str] = None):
        super().__init__(
            message=message,
            details={"linalg_error": linalg_error} if linalg_error else None
        )


class ArtifactFormatException(DriveCodeException):
    """
    Raised when a scene, store, report or trajectory file cannot be read

    Examples:
        - Unsupported schema version
        - Missing header keys
    """

    def __init__(
        self,
        message: str,
        path: Optional[str] = None,
        schema_version: Optional[str] = None,
        details: Optional[Dict[str, Any]] = None
    ):
        error_details = details or {}

        if path:
            error_details["path"] = path
        if schema_version:
            error_details["schema_version"] = schema_version

        super().__init__(message=message, details=error_details)


class ConfigurationException(DriveCodeException):
    """
    Raised when run configuration is invalid

    Examples:
        - Missing input files
        - Out of range values
        - Configuration file errors
    """

    def __init__(
        self,
        message: str,
        config_key: Optional[str] = None,
        config_value: Any = None,
        details: Optional[Dict[str, Any]] = None
    ):
        error_details = details or {}

        if config_key:
            error_details["config_key"] = config_key
        if config_value is not None:
            error_details["config_value"] = str(config_value)

        super().__init__(
            message=message,
            exit_code=EXIT_USAGE_ERROR,
            details=error_details
        )
