"""Enumeration definitions shared across the pipeline"""
from enum import Enum


class Units(str, Enum):
    """Length units of a raw trajectory table"""
    FEET = "feet"
    METERS = "meters"

    @property
    def to_meters(self) -> float:
        return 0.3048 if self is Units.FEET else 1.0


class FilterReason(str, Enum):
    """Why the hygiene filter removed a vehicle"""
    FRAME_GAP = "frame_gap"
    WRONG_LEAD = "wrong_lead"


class HeadwaySource(str, Enum):
    """Where the gap to the recorded lead comes from"""
    GEOMETRY = "geometry"
    RECORDED = "recorded"


class CodeFeature(str, Enum):
    """Dimensions of a driving code"""
    TAU = "tau"
    NU = "nu"
    OMEGA = "omega"


class SpeedFeature(str, Enum):
    """Operationalization of the speed dimension of a driving code"""
    ABSOLUTE = "absolute"
    RELATIVE = "relative"


class Method(str, Enum):
    """Benchmark methods, in report row order"""
    CONSTVEL = "constvel"
    IDM_AVERAGE = "idm_average"
    IDM_PREDICT = "idm_predict"
    IDM_ORACLE = "idm_oracle"

    @property
    def label(self) -> str:
        return {
            Method.CONSTVEL: "Const. vel",
            Method.IDM_AVERAGE: "IDM Ave",
            Method.IDM_PREDICT: "IDM Pred",
            Method.IDM_ORACLE: "IDM Est. (Oracle)",
        }[self]

    @classmethod
    def parse(cls, token: str) -> "Method":
        """Accept both full names and the short CLI aliases"""
        aliases = {"avg": cls.IDM_AVERAGE, "pred": cls.IDM_PREDICT, "oracle": cls.IDM_ORACLE}
        token = token.strip().lower()
        return aliases[token] if token in aliases else cls(token)


class ControllerKind(str, Enum):
    """Acceleration policies selectable from the command line"""
    IDM = "idm"
    CONSTVEL = "constvel"


class AdeNormalization(str, Enum):
    """Divisor of the displacement sum: number of points, or horizon T = points - 1"""
    POINTS = "points"
    HORIZON = "horizon"


class TerminationReason(str, Enum):
    """Why a rollout ended before its horizon"""
    LANE_EXHAUSTED = "lane_exhausted"
    COLLISION = "collision"


class ReportFormat(str, Enum):
    MARKDOWN = "md"
    CSV = "csv"


class Ablation(str, Enum):
    """Benchmark variants the evaluate command can run"""
    NONE = "none"
    CODE = "code"
    FRAMES = "frames"
    NEIGHBORS = "k"
