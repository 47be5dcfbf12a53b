"""Pydantic models for the domain types of every pipeline stage"""

import math
from typing import ClassVar, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, field_validator, model_validator

from app.core.enums import CodeFeature, FilterReason, Method, TerminationReason

NO_LEAD = 0
STATE_COLUMNS = ("x", "y", "psi", "v")


def wrap_angle(angle: float) -> float:
    """Map an angle to (-pi, pi]"""
    wrapped = math.remainder(angle, 2.0 * math.pi)
    return math.pi if wrapped == -math.pi else wrapped


# --- Vehicle level ---

class VehicleState(BaseModel):
    """Physical state of one vehicle at one frame"""
    model_config = ConfigDict(frozen=True)

    x: float = Field(..., description="Longitudinal position (m)")
    y: float = Field(..., description="Lateral position (m)")
    psi: float = Field(default=0.0, description="Heading (rad)")
    v: float = Field(default=0.0, ge=0.0, description="Speed (m/s)")

    @field_validator("psi")
    @classmethod
    def normalize_heading(cls, psi: float) -> float:
        if not math.isfinite(psi):
            raise ValueError("Heading must be finite")
        return wrap_angle(psi)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return self.x, self.y, self.psi, self.v


class ControlInput(BaseModel):
    """Longitudinal acceleration and steering angle"""
    model_config = ConfigDict(frozen=True)

    accel: float = 0.0
    delta: float = 0.0


class VehicleGeometry(BaseModel):
    """Footprint and axle placement of a vehicle"""
    model_config = ConfigDict(frozen=True)

    length: float = Field(..., gt=0.0)
    width: float = Field(..., gt=0.0)
    lf: float = Field(..., gt=0.0, description="Center of mass to front axle (m)")
    lr: float = Field(..., gt=0.0, description="Center of mass to rear axle (m)")

    @model_validator(mode="after")
    def check_axles(self) -> "VehicleGeometry":
        if self.lf + self.lr > self.length:
            raise ValueError("Wheelbase lf + lr cannot exceed vehicle length")
        return self

    @classmethod
    def from_dimensions(
        cls, length: float, width: float, axle_ratio: float = 0.25
    ) -> "VehicleGeometry":
        """Axles at axle_ratio * length on both sides of the center of mass"""
        return cls(length=length, width=width, lf=axle_ratio * length, lr=axle_ratio * length)


class LaneGeometry(BaseModel):
    """A lane as a centerline polyline with constant width"""
    model_config = ConfigDict(frozen=True)

    lane_id: int
    centerline: list[tuple[float, float]] = Field(..., min_length=2)
    width: float = Field(..., gt=0.0)

    _points: np.ndarray = PrivateAttr()
    _cumulative: np.ndarray = PrivateAttr()
    _directions: np.ndarray = PrivateAttr()
    _segments: list[tuple[float, ...]] = PrivateAttr()

    @field_validator("centerline")
    @classmethod
    def check_arc_length(cls, centerline: list[tuple[float, float]]) -> list[tuple[float, float]]:
        points = np.asarray(centerline, dtype=float)
        if not np.all(np.isfinite(points)):
            raise ValueError("Centerline points must be finite")
        if np.any(np.linalg.norm(np.diff(points, axis=0), axis=1) <= 0.0):
            raise ValueError("Centerline arc length must be strictly increasing")
        return centerline

    def model_post_init(self, __context) -> None:
        points = np.asarray(self.centerline, dtype=float)
        segments = np.diff(points, axis=0)
        lengths = np.linalg.norm(segments, axis=1)
        self._points = points
        self._cumulative = np.concatenate(([0.0], np.cumsum(lengths)))
        self._directions = segments / lengths[:, None]
        self._segments = [
            (float(p[0]), float(p[1]), float(u[0]), float(u[1]), float(c), float(n))
            for p, u, c, n in zip(points[:-1], self._directions, self._cumulative[:-1], lengths)
        ]

    @property
    def length(self) -> float:
        return float(self._cumulative[-1])

    def project(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """
        Project points onto the centerline

        Args:
            points: (..., 2) array of positions

        Returns:
            Arc length and signed lateral offset (positive to the left) for every point.
            Arc length extrapolates before the first and after the last vertex.
        """
        pts = np.asarray(points, dtype=float)
        flat = pts.reshape(-1, 2)
        starts = self._points[:-1]
        seg_len = np.diff(self._cumulative)

        rel = flat[:, None, :] - starts[None, :, :]
        along = np.einsum("nkd,kd->nk", rel, self._directions)
        n_seg = len(seg_len)
        lower = np.where(np.arange(n_seg) == 0, -np.inf, 0.0)
        upper = np.where(np.arange(n_seg) == n_seg - 1, np.inf, seg_len)
        clipped = np.clip(along, lower, upper)
        foot = starts[None, :, :] + clipped[..., None] * self._directions[None, :, :]
        distance = np.linalg.norm(flat[:, None, :] - foot, axis=2)
        best = np.argmin(distance, axis=1)

        rows = np.arange(len(flat))
        arc = self._cumulative[best] + clipped[rows, best]
        direction = self._directions[best]
        offset = direction[:, 0] * rel[rows, best, 1] - direction[:, 1] * rel[rows, best, 0]
        shape = pts.shape[:-1]
        return arc.reshape(shape), offset.reshape(shape)

    def project_point(self, x: float, y: float) -> tuple[float, float]:
        """Scalar version of project for a single position"""
        last = len(self._segments) - 1
        best_dist, best_arc, best_offset = math.inf, 0.0, 0.0
        for k, (px, py, ux, uy, start, seg_len) in enumerate(self._segments):
            rx, ry = x - px, y - py
            t = rx * ux + ry * uy
            if k > 0 and t < 0.0:
                t = 0.0
            if k < last and t > seg_len:
                t = seg_len
            dist = math.hypot(rx - t * ux, ry - t * uy)
            if dist < best_dist:
                best_dist, best_arc, best_offset = dist, start + t, ux * ry - uy * rx
        return best_arc, best_offset

    def point_at(self, arc_length: float) -> tuple[float, float]:
        """Centerline point at an arc length, extrapolating past the ends"""
        seg = int(np.clip(np.searchsorted(self._cumulative, arc_length, side="right") - 1,
                          0, len(self._directions) - 1))
        point = self._points[seg] + (arc_length - self._cumulative[seg]) * self._directions[seg]
        return float(point[0]), float(point[1])

    def heading_at(self, arc_length: float) -> float:
        seg = int(np.clip(np.searchsorted(self._cumulative, arc_length, side="right") - 1,
                          0, len(self._directions) - 1))
        dx, dy = self._directions[seg]
        return math.atan2(dy, dx)


class RoadGeometry(BaseModel):
    """Left and right road edges as polylines"""
    model_config = ConfigDict(frozen=True)

    left_boundary: LaneGeometry
    right_boundary: LaneGeometry

    @classmethod
    def from_lanes(cls, lanes: list["LaneGeometry"]) -> "RoadGeometry":
        """Offset the outermost centerlines by half a lane width"""
        if not lanes:
            raise ValueError("A road needs at least one lane")

        def _offset(lane: LaneGeometry, sign: float, lane_id: int) -> LaneGeometry:
            normals = np.column_stack((-lane._directions[:, 1], lane._directions[:, 0]))
            normals = np.vstack((normals, normals[-1:]))
            shifted = lane._points + sign * 0.5 * lane.width * normals
            return LaneGeometry(
                lane_id=lane_id, centerline=[tuple(p) for p in shifted.tolist()], width=lane.width
            )

        origin = lanes[0]._points[0:1]
        lateral = [float(lane.project(origin)[1][0]) for lane in lanes]
        leftmost = lanes[int(np.argmin(lateral))]
        rightmost = lanes[int(np.argmax(lateral))]
        return cls(
            left_boundary=_offset(leftmost, 1.0, -1),
            right_boundary=_offset(rightmost, -1.0, -2),
        )


class Trajectory(BaseModel):
    """Ordered states of one vehicle at a fixed frame period"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    vehicle_id: int
    frames: np.ndarray
    states: np.ndarray
    dt: float = Field(default=0.1, gt=0.0)

    @field_validator("frames", mode="before")
    @classmethod
    def coerce_frames(cls, frames) -> np.ndarray:
        array = np.array(frames, dtype=np.int64)
        if array.ndim != 1 or len(array) < 2:
            raise ValueError("A trajectory needs at least two frames")
        if np.any(np.diff(array) <= 0):
            raise ValueError("Frame indices must be strictly increasing")
        array.flags.writeable = False
        return array

    @field_validator("states", mode="before")
    @classmethod
    def coerce_states(cls, states) -> np.ndarray:
        array = np.array(states, dtype=float)
        if array.ndim != 2 or array.shape[1] != len(STATE_COLUMNS):
            raise ValueError("States must be an (N, 4) array of x, y, psi, v")
        array.flags.writeable = False
        return array

    @model_validator(mode="after")
    def check_lengths(self) -> "Trajectory":
        if len(self.frames) != len(self.states):
            raise ValueError("Frames and states must have the same length")
        return self

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def positions(self) -> np.ndarray:
        return self.states[:, :2]

    @property
    def duration(self) -> float:
        return len(self) * self.dt

    @property
    def is_contiguous(self) -> bool:
        return bool(np.all(np.diff(self.frames) == 1))

    def state_at(self, index: int) -> VehicleState:
        x, y, psi, v = self.states[index]
        return VehicleState(x=x, y=y, psi=psi, v=max(v, 0.0))

    def window(self, start: int, length: int) -> "Trajectory":
        return Trajectory(
            vehicle_id=self.vehicle_id,
            frames=self.frames[start:start + length],
            states=self.states[start:start + length],
            dt=self.dt,
        )


class VehicleTrack(BaseModel):
    """Everything a scene records about one vehicle"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    trajectory: Trajectory
    geometry: VehicleGeometry
    lane_ids: np.ndarray
    preceding: np.ndarray
    space_headway: np.ndarray

    @field_validator("lane_ids", "preceding", mode="before")
    @classmethod
    def coerce_ids(cls, values) -> np.ndarray:
        array = np.array(values, dtype=np.int64)
        array.flags.writeable = False
        return array

    @field_validator("space_headway", mode="before")
    @classmethod
    def coerce_headway(cls, values) -> np.ndarray:
        array = np.array(values, dtype=float)
        array.flags.writeable = False
        return array

    @model_validator(mode="after")
    def check_lengths(self) -> "VehicleTrack":
        n = len(self.trajectory)
        if not (len(self.lane_ids) == len(self.preceding) == len(self.space_headway) == n):
            raise ValueError("Per-frame columns must match the trajectory length")
        return self


class Scene(BaseModel):
    """A recorded multi-vehicle traffic episode with lane geometry"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    vehicles: dict[int, VehicleTrack]
    lanes: list[LaneGeometry]
    dt: float = Field(default=0.1, gt=0.0)
    v0: float = Field(default=29.06, gt=0.0, description="Speed limit (m/s)")

    @model_validator(mode="after")
    def check_common_dt(self) -> "Scene":
        for vehicle_id, track in self.vehicles.items():
            if not math.isclose(track.trajectory.dt, self.dt):
                raise ValueError(f"Vehicle {vehicle_id} does not share the scene frame period")
        return self

    @property
    def frame_range(self) -> tuple[int, int]:
        if not self.vehicles:
            return 0, 0
        first = min(int(t.trajectory.frames[0]) for t in self.vehicles.values())
        last = max(int(t.trajectory.frames[-1]) for t in self.vehicles.values())
        return first, last

    @property
    def vehicle_ids(self) -> list[int]:
        return sorted(self.vehicles)

    def lane(self, lane_id: int) -> LaneGeometry:
        for lane in self.lanes:
            if lane.lane_id == lane_id:
                return lane
        raise KeyError(f"Lane {lane_id} not in scene")


class FilterReport(BaseModel):
    """Outcome of the hygiene filter"""
    ingested: int
    retained: list[int] = Field(default_factory=list)
    removed: dict[int, FilterReason] = Field(default_factory=dict)

    def count(self, reason: FilterReason) -> int:
        return sum(1 for r in self.removed.values() if r is reason)


class Episode(BaseModel):
    """
    One modeled vehicle's ground-truth window plus the replayed traffic around it

    Replayed vehicles are stored as dense arrays aligned with the window frames;
    absent vehicles hold NaN states and lane id -1.
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    vehicle_id: int
    truth: Trajectory
    geometry: VehicleGeometry
    lane: LaneGeometry
    lanes: list[LaneGeometry]
    v0: float
    others_ids: np.ndarray
    others_states: np.ndarray
    others_lane_ids: np.ndarray
    others_length: np.ndarray
    others_width: np.ndarray
    lead_gaps: np.ndarray
    lead_speeds: np.ndarray

    _arc_cache: dict[int, np.ndarray] = PrivateAttr(default_factory=dict)

    def others_arc(self, lane_index: int) -> np.ndarray:
        """Arc length of every replayed vehicle along lanes[lane_index], NaN where absent"""
        if lane_index not in self._arc_cache:
            arc, _ = self.lanes[lane_index].project(self.others_states[..., :2])
            self._arc_cache[lane_index] = arc
        return self._arc_cache[lane_index]

    @property
    def horizon(self) -> int:
        return len(self.truth)

    @property
    def dt(self) -> float:
        return self.truth.dt


# --- IDM ---

class IdmParams(BaseModel):
    """The five driver-specific IDM parameters"""
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    a: float = Field(..., gt=0.0, description="Maximum acceleration (m/s^2)")
    b: float = Field(..., gt=0.0, description="Desired deceleration (m/s^2)")
    T_headway: float = Field(..., ge=0.0, alias="T", description="Safe time headway (s)")
    d0: float = Field(..., ge=0.0, description="Jam distance (m)")
    d1: float = Field(..., ge=0.0, description="Velocity-dependent jam distance (m)")

    FIELDS: ClassVar[tuple[str, ...]] = ("a", "b", "T_headway", "d0", "d1")

    def to_array(self) -> np.ndarray:
        return np.array([self.a, self.b, self.T_headway, self.d0, self.d1], dtype=float)

    @classmethod
    def from_array(cls, values) -> "IdmParams":
        a, b, t, d0, d1 = (float(v) for v in values)
        return cls(a=a, b=b, T=t, d0=d0, d1=d1)


class IdmBounds(BaseModel):
    """Per-parameter search intervals"""
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    a: tuple[float, float] = (0.3, 5.0)
    b: tuple[float, float] = (0.5, 5.0)
    T_headway: tuple[float, float] = Field(default=(0.1, 3.0), alias="T")
    d0: tuple[float, float] = (0.0, 10.0)
    d1: tuple[float, float] = (0.0, 20.0)

    @model_validator(mode="after")
    def check_intervals(self) -> "IdmBounds":
        for name in IdmParams.FIELDS:
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ValueError(f"Bound for {name} must satisfy lower < upper")
        if self.a[0] <= 0.0 or self.b[0] <= 0.0:
            raise ValueError("Bounds for a and b must be strictly positive")
        return self

    def lower(self) -> np.ndarray:
        return np.array([getattr(self, name)[0] for name in IdmParams.FIELDS])

    def upper(self) -> np.ndarray:
        return np.array([getattr(self, name)[1] for name in IdmParams.FIELDS])

    def width(self) -> np.ndarray:
        return self.upper() - self.lower()

    def contains(self, params: IdmParams) -> bool:
        values = params.to_array()
        return bool(np.all(values >= self.lower()) and np.all(values <= self.upper()))

    def clip(self, params: IdmParams) -> IdmParams:
        return IdmParams.from_array(np.clip(params.to_array(), self.lower(), self.upper()))


class IdmGlobals(BaseModel):
    """Scene-wide IDM constants"""
    model_config = ConfigDict(frozen=True)

    v0: float = Field(default=29.06, gt=0.0, description="Desired speed (m/s)")
    phi: float = Field(default=4.0, gt=0.0, description="Acceleration exponent")


class IdmState(BaseModel):
    """Inputs of the IDM law; d is None when there is no lead"""
    model_config = ConfigDict(frozen=True)

    v: float = Field(..., ge=0.0)
    dv: float = 0.0
    d: Optional[float] = None


# --- Dynamics / rollout ---

class PurePursuitConfig(BaseModel):
    """Lane-keeping steering gains"""
    model_config = ConfigDict(frozen=True)

    t_lookahead: float = Field(default=1.0, gt=0.0, description="Lookahead time gain (s)")
    ld_min: float = Field(default=5.0, gt=0.0, description="Minimum lookahead distance (m)")
    delta_max: float = Field(default=0.6, gt=0.0, description="Steering clamp (rad)")


class RolloutResult(BaseModel):
    """Outcome of one closed-loop rollout"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    model_trajectory: Trajectory
    collided: bool = False
    at_fault: bool = False
    collision_frame: Optional[int] = None
    collided_with: Optional[int] = None
    terminated_early: bool = False
    termination_reason: Optional[TerminationReason] = None

    @model_validator(mode="after")
    def check_fault(self) -> "RolloutResult":
        if self.at_fault and not self.collided:
            raise ValueError("at_fault requires a collision")
        return self


# --- Estimation / prediction ---

class FitResult(BaseModel):
    """Best parameters found by the full-information fit"""
    params: IdmParams
    ade: float = Field(..., ge=0.0)
    fde: float = Field(..., ge=0.0)
    n_restarts_used: int
    converged: bool


class DrivingCode(BaseModel):
    """Observable behavior statistics; None marks a missing or masked dimension"""
    model_config = ConfigDict(frozen=True)

    tau: Optional[float] = Field(default=None, description="Mean signed lane offset (m)")
    nu: Optional[float] = Field(default=None, description="Mean speed (m/s)")
    omega: Optional[float] = Field(default=None, ge=0.0, description="Mean time headway (s)")

    def to_array(self) -> np.ndarray:
        return np.array(
            [np.nan if getattr(self, f.value) is None else getattr(self, f.value)
             for f in CodeFeature],
            dtype=float,
        )

    @classmethod
    def from_array(cls, values) -> "DrivingCode":
        return cls(**{
            f.value: None if not np.isfinite(v) else float(v) for f, v in zip(CodeFeature, values)
        })

    def masked(self, feature_mask: set[CodeFeature]) -> "DrivingCode":
        return DrivingCode(**{
            f.value: getattr(self, f.value) if f in feature_mask else None for f in CodeFeature
        })


class StoreEntry(BaseModel):
    """One training vehicle: fitted parameters paired with its driving code"""
    model_config = ConfigDict(frozen=True)

    vehicle_id: int
    params: IdmParams
    code: DrivingCode


# --- Evaluation ---

class EvalRecord(BaseModel):
    """Per-vehicle, per-method benchmark outcome"""
    vehicle_id: int
    method: str
    ade: float = Field(..., ge=0.0)
    fde: float = Field(..., ge=0.0)
    collided_at_fault: bool = False


class ReportRow(BaseModel):
    """Aggregated statistics of one method"""
    method: str
    n: int
    mean_ade: float
    se_ade: float
    mean_fde: float
    se_fde: float
    at_fault_collisions: int


class ReportTable(BaseModel):
    """Rows of a benchmark table in presentation order"""
    rows: list[ReportRow] = Field(default_factory=list)

    def row(self, method: str | Method) -> ReportRow:
        key = method.value if isinstance(method, Method) else method
        for row in self.rows:
            if row.method == key:
                return row
        raise KeyError(f"No row for {key}")


# --- Risk ---

class EllipseGaussian(BaseModel):
    """Oriented Gaussian footprint of a vehicle"""
    model_config = ConfigDict(frozen=True)

    mu: tuple[float, float] = Field(..., description="Position mean (m)")
    tau_rot: float = Field(default=0.0, description="Rotation of the principal axes (rad)")
    L: float = Field(..., gt=0.0, description="Longitudinal variance (m^2)")
    W: float = Field(..., gt=0.0, description="Lateral variance (m^2)")


class RewardFeatures(BaseModel):
    """Reward feature map of one vehicle state, in physical units"""
    lane_center_distance: float
    road_boundary_distance: float
    speed: float
    heading_error: float
    collision_risk: float

    def to_array(self) -> np.ndarray:
        return np.array([
            self.lane_center_distance,
            self.road_boundary_distance,
            self.speed,
            self.heading_error,
            self.collision_risk,
        ])
