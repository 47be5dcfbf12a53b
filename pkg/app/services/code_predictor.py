"""
Driving-code extraction and nearest-neighbor parameter prediction

A driving code summarizes a short observation window by three statistics:
mean signed lane offset, speed and time headway. Parameters for a new driver
are the average of the parameters of the k training drivers with the closest
standardized codes.
"""

from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np
import pandas as pd
from sklearn.preprocessing import StandardScaler

from app.config import KnnSettings, Settings
from app.core.enums import CodeFeature, HeadwaySource, SpeedFeature
from app.core.exceptions import (
    DriveCodeException,
    EmptyStoreException,
    EmptyWindowException,
    InsufficientLengthException,
    NeighborCountException,
)
from app.core.models import DrivingCode, IdmParams, LaneGeometry, Scene, StoreEntry, Trajectory
from app.services.scene_data import lead_profile
from app.utils.artifacts import read_table, run_header, write_table
from app.utils.logger import setup_logger

logger = setup_logger(__name__)

FEATURE_INDEX = {feature: i for i, feature in enumerate(CodeFeature)}
PARAM_COLUMNS = ("a", "b", "T", "d0", "d1")


def _lateral_offsets(window: Trajectory, lanes: Sequence[LaneGeometry]) -> np.ndarray:
    """Signed offset of every frame from the centerline of the lane it occupies"""
    offsets = np.empty(len(window))
    lane_ids = np.array([lane.lane_id for lane in lanes])
    for lane_id in np.unique(lane_ids):
        rows = np.flatnonzero(lane_ids == lane_id)
        lane = lanes[int(rows[0])]
        _, offsets[rows] = lane.project(window.positions[rows])
    return offsets


def extract_code(
    window: Trajectory,
    lane: Union[LaneGeometry, Sequence[LaneGeometry]],
    lead_gaps: np.ndarray,
    lead_speeds: np.ndarray,
    features: Optional[Iterable[CodeFeature]] = None,
    speed_feature: SpeedFeature = SpeedFeature.ABSOLUTE,
    min_speed: float = 0.1,
) -> DrivingCode:
    """
    Driving code of an observation window

    Args:
        window: Observed states
        lane: Lane whose centerline defines the lateral offset, or one lane per frame
            for a window that crosses lanes
        lead_gaps: Per-frame bumper gap to the lead, NaN without lead
        lead_speeds: Per-frame lead speed, NaN without lead
        features: Dimensions to keep; the others are masked to None
        speed_feature: Absolute mean speed or mean speed relative to the lead
        min_speed: Frames slower than this do not contribute to the headway

    Returns:
        Driving code; omega is None when no frame has a lead and a usable speed

    Raises:
        EmptyWindowException: Lane or lead data shorter than the window
    """
    n = len(window)
    lanes = [lane] * n if isinstance(lane, LaneGeometry) else list(lane)
    if len(lanes) < n or len(lead_gaps) < n or len(lead_speeds) < n:
        raise EmptyWindowException(
            "Lead and lane data do not cover the observation window", frames=n
        )

    gaps = np.asarray(lead_gaps[:n], dtype=float)
    lead_v = np.asarray(lead_speeds[:n], dtype=float)
    speed = window.states[:, 3]

    tau = float(_lateral_offsets(window, lanes[:n]).mean())

    if speed_feature is SpeedFeature.ABSOLUTE:
        nu: Optional[float] = float(speed.mean())
    else:
        with_lead = np.isfinite(lead_v)
        nu = float((speed[with_lead] - lead_v[with_lead]).mean()) if with_lead.any() else None

    usable = np.isfinite(gaps) & (gaps > 0.0) & (speed > min_speed)
    omega = float((gaps[usable] / speed[usable]).mean()) if usable.any() else None

    code = DrivingCode(tau=tau, nu=nu, omega=omega)
    return code if features is None else code.masked(set(features))


def vehicle_code(
    scene: Scene,
    vehicle_id: int,
    frames: Optional[int] = None,
    config: Optional[KnnSettings] = None,
    headway_source: HeadwaySource = HeadwaySource.GEOMETRY,
) -> DrivingCode:
    """
    Driving code over the first `frames` frames of a vehicle (all frames when None)

    Raises:
        EmptyWindowException: frames below two
        InsufficientLengthException: Vehicle observed for fewer than `frames` frames
    """
    config = config or KnnSettings()
    if frames is not None and frames < 2:
        raise EmptyWindowException("Driving code needs at least two frames", frames=frames)

    track = scene.vehicles[vehicle_id]
    available = len(track.trajectory)
    if frames is not None and frames > available:
        raise InsufficientLengthException(
            "Trajectory shorter than the observation window",
            vehicle_id=vehicle_id,
            available=available,
            required=frames,
        )
    n = available if frames is None else frames
    gaps, speeds = lead_profile(scene, vehicle_id, headway_source)
    return extract_code(
        track.trajectory.window(0, n),
        [scene.lane(int(lane_id)) for lane_id in track.lane_ids[:n]],
        gaps[:n],
        speeds[:n],
        features=config.features,
        speed_feature=config.speed_feature,
        min_speed=config.min_speed,
    )


def _average(rows: np.ndarray) -> np.ndarray:
    """Mean parameter vector kept inside the hull of the averaged rows"""
    return np.clip(rows.mean(axis=0), rows.min(axis=0), rows.max(axis=0))


class KnnStore:
    """
    Training drivers' fitted parameters indexed by standardized driving code

    Entries are ordered by vehicle id; distance ties resolve in that order.
    """

    def __init__(self, entries: Iterable[StoreEntry], std_floor: float = 1e-9):
        self.entries = sorted(entries, key=lambda e: e.vehicle_id)
        n_dims = len(CodeFeature)
        self._params = np.array([e.params.to_array() for e in self.entries]).reshape(-1, 5)
        codes = np.array([e.code.to_array() for e in self.entries]).reshape(-1, n_dims)

        self.mean = np.zeros(n_dims)
        self.std = np.ones(n_dims)
        self.degenerate_dims: list[CodeFeature] = []
        if len(self.entries):
            observed = np.isfinite(codes).any(axis=0)
            scaler = StandardScaler()
            if observed.any():
                scaler.fit(codes[:, observed])
                self.mean[observed] = scaler.mean_
                self.std[observed] = np.sqrt(scaler.var_)
            for feature, i in FEATURE_INDEX.items():
                if not observed[i] or self.std[i] < std_floor:
                    self.std[i] = max(self.std[i], std_floor) if observed[i] else 1.0
                    self.degenerate_dims.append(feature)
            if self.degenerate_dims:
                logger.warning(
                    "Degenerate driving-code dimensions in store",
                    extra={"dims": [f.value for f in self.degenerate_dims]},
                )
        self._z = (codes - self.mean) / self.std

    def __len__(self) -> int:
        return len(self.entries)

    @classmethod
    def from_entries(
        cls, entries: Iterable[StoreEntry], config: Optional[KnnSettings] = None
    ) -> "KnnStore":
        config = config or KnnSettings()
        return cls(entries, std_floor=config.std_floor)

    def average_params(self) -> IdmParams:
        """Arithmetic mean of all stored parameters"""
        if not len(self):
            raise EmptyStoreException()
        return IdmParams.from_array(_average(self._params))

    def neighbors(
        self,
        query: DrivingCode,
        k: int,
        features: Optional[Iterable[CodeFeature]] = None,
    ) -> np.ndarray:
        """
        Store indices of the k nearest codes, nearest first

        Distances use the unmasked dimensions present in both codes, rescaled
        by the number of dimensions actually compared.
        """
        if not len(self):
            raise EmptyStoreException()
        if k > len(self) or k < 1:
            raise NeighborCountException(
                "Neighbor count must be between 1 and the store size", k=k, store_size=len(self)
            )

        mask = list(CodeFeature) if features is None else list(features)
        q = (query.to_array() - self.mean) / self.std
        dims = [
            FEATURE_INDEX[f] for f in CodeFeature
            if f in mask and np.isfinite(q[FEATURE_INDEX[f]])
        ]
        if not dims:
            return np.arange(k)

        diff = self._z[:, dims] - q[dims]
        available = np.isfinite(diff)
        squared = np.where(available, diff * diff, 0.0).sum(axis=1)
        counts = available.sum(axis=1)
        distance = np.where(counts > 0, squared * len(dims) / np.maximum(counts, 1), np.inf)
        return np.argsort(distance, kind="stable")[:k]

    def predict_params(
        self,
        query: DrivingCode,
        k: int,
        features: Optional[Iterable[CodeFeature]] = None,
    ) -> IdmParams:
        """
        Average parameters of the k nearest training drivers

        Raises:
            EmptyStoreException: Store has no entries
            NeighborCountException: k exceeds the store size
        """
        idx = np.sort(self.neighbors(query, k, features))
        return IdmParams.from_array(_average(self._params[idx]))


def predict_params(
    store: KnnStore,
    query: DrivingCode,
    k: int = 8,
    features: Optional[Iterable[CodeFeature]] = None,
) -> IdmParams:
    return store.predict_params(query, k, features)


def predict_all(
    store: KnnStore,
    scene: Scene,
    config: Optional[Settings] = None,
    observe_frames: Optional[int] = None,
    k: Optional[int] = None,
    features: Optional[Iterable[CodeFeature]] = None,
    vehicle_ids: Optional[Iterable[int]] = None,
) -> tuple[dict[int, IdmParams], dict[int, str]]:
    """
    Predict parameters for every vehicle of a scene from its first frames

    Returns:
        Predictions by vehicle id and the reasons of skipped vehicles
    """
    config = config or Settings()
    knn = config.knn
    observe_frames = observe_frames or knn.observe_frames
    k = k or knn.k
    features = list(features) if features is not None else knn.features
    knn = knn.model_copy(update={"features": features})

    predictions: dict[int, IdmParams] = {}
    skipped: dict[int, str] = {}
    for vehicle_id in sorted(vehicle_ids if vehicle_ids is not None else scene.vehicle_ids):
        try:
            code = vehicle_code(
                scene, vehicle_id, observe_frames, knn, config.ingest.headway_source
            )
            predictions[vehicle_id] = store.predict_params(code, k, features)
        except (EmptyStoreException, NeighborCountException):
            raise
        except DriveCodeException as e:
            skipped[vehicle_id] = e.message
            logger.warning(f"Skipping vehicle {vehicle_id}", extra=e.to_dict())
    return predictions, skipped


def save_predictions(
    predictions: dict[int, IdmParams],
    path: Path,
    config: Optional[Settings] = None,
) -> Path:
    """Write predicted parameters, one row per vehicle"""
    rows = [[vehicle_id, *predictions[vehicle_id].to_array()] for vehicle_id in sorted(predictions)]
    frame = pd.DataFrame(rows, columns=["vehicle_id", *PARAM_COLUMNS])
    frame["vehicle_id"] = frame["vehicle_id"].astype(np.int64)
    return write_table(path, "params", frame, run_header(config))


def load_predictions(path: Path) -> dict[int, IdmParams]:
    _, frame = read_table(path, "params")
    return {
        int(row.vehicle_id): IdmParams.from_array([getattr(row, c) for c in PARAM_COLUMNS])
        for row in frame.itertuples(index=False)
    }
