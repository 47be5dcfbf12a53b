"""
Trajectory ingestion, hygiene filtering and episode extraction

Raw NGSIM tables are converted once into the canonical vehicle-frame table
(SI units, derived headings) and from there into immutable Scene objects.
"""

import json
from pathlib import Path
from typing import IO, Optional, Union

import numpy as np
import pandas as pd

from app.config import IngestSettings, Settings
from app.core.enums import FilterReason, HeadwaySource
from app.core.exceptions import EmptySceneException, InsufficientLengthException, SchemaException
from app.core.models import (
    NO_LEAD,
    Episode,
    FilterReport,
    LaneGeometry,
    Scene,
    Trajectory,
    VehicleGeometry,
    VehicleTrack,
    wrap_angle,
)
from app.utils.artifacts import read_table, run_header, write_table
from app.utils.logger import setup_logger

logger = setup_logger(__name__)

REQUIRED_COLUMNS = (
    "Vehicle_ID", "Frame_ID", "Local_X", "Local_Y", "v_Vel",
    "v_Length", "v_Width", "Lane_ID", "Preceding", "Space_Headway",
)
COLUMN_ALIASES = {"Space_Hdwy": "Space_Headway"}
SCENE_COLUMNS = (
    "vehicle_id", "frame", "x", "y", "psi", "v", "length", "width",
    "lf", "lr", "lane_id", "preceding", "space_headway",
)


def derive_heading(x: np.ndarray, y: np.ndarray, window: int = 5) -> np.ndarray:
    """
    Heading from consecutive positions, smoothed by a centered moving average

    Forward differences everywhere except the last frame, which reuses the
    backward difference. Frames without displacement inherit the neighbouring heading.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 2:
        return np.zeros(len(x))

    dx, dy = np.diff(x), np.diff(y)
    raw = np.arctan2(dy, dx)
    raw[np.hypot(dx, dy) < 1e-9] = np.nan
    raw = np.append(raw, raw[-1])
    raw = pd.Series(raw).ffill().bfill().fillna(0.0).to_numpy()

    unwrapped = np.unwrap(raw)
    smoothed = pd.Series(unwrapped).rolling(window, center=True, min_periods=1).mean().to_numpy()
    return np.array([wrap_angle(a) for a in smoothed])


def estimate_lanes(
    frame: pd.DataFrame,
    lane_ids: list[int],
    width: float,
    margin: float = 100.0,
) -> list[LaneGeometry]:
    """
    Straight centerlines at the per-lane median lateral position

    The road direction is the circular mean of all headings; each lane spans the
    data extent along that direction plus `margin` meters on both ends.
    """
    direction = np.array([np.cos(frame["psi"]).mean(), np.sin(frame["psi"]).mean()])
    direction /= np.linalg.norm(direction)
    normal = np.array([-direction[1], direction[0]])

    points = frame[["x", "y"]].to_numpy()
    along = points @ direction
    start, end = along.min() - margin, along.max() + margin

    lanes = []
    for lane_id in sorted(lane_ids):
        rows = frame["lane_id"].to_numpy() == lane_id
        if not rows.any():
            continue
        center = float(np.median(points[rows] @ normal))
        a = center * normal + start * direction
        b = center * normal + end * direction
        lanes.append(LaneGeometry(lane_id=lane_id, centerline=[tuple(a), tuple(b)], width=width))
    return lanes


def load_lanes(path: Path) -> list[LaneGeometry]:
    """Externally supplied centerlines: a JSON list of LaneGeometry objects"""
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return [LaneGeometry.model_validate(item) for item in payload]


def scene_from_frame(
    frame: pd.DataFrame,
    lanes: list[LaneGeometry],
    dt: float = 0.1,
    v0: float = 29.06,
) -> Scene:
    """Build a Scene from the canonical vehicle-frame table"""
    frame = frame.sort_values(["vehicle_id", "frame"], kind="stable")
    vehicles: dict[int, VehicleTrack] = {}
    for vehicle_id, rows in frame.groupby("vehicle_id", sort=True):
        first = rows.iloc[0]
        trajectory = Trajectory(
            vehicle_id=int(vehicle_id),
            frames=rows["frame"].to_numpy(),
            states=rows[["x", "y", "psi", "v"]].to_numpy(),
            dt=dt,
        )
        vehicles[int(vehicle_id)] = VehicleTrack(
            trajectory=trajectory,
            geometry=VehicleGeometry(
                length=float(first["length"]), width=float(first["width"]),
                lf=float(first["lf"]), lr=float(first["lr"]),
            ),
            lane_ids=rows["lane_id"].to_numpy(),
            preceding=rows["preceding"].to_numpy(),
            space_headway=rows["space_headway"].to_numpy(),
        )
    return Scene(vehicles=vehicles, lanes=lanes, dt=dt, v0=v0)


def scene_to_frame(scene: Scene) -> pd.DataFrame:
    """Canonical vehicle-frame table of a Scene, ordered by vehicle and frame"""
    parts = []
    for vehicle_id in scene.vehicle_ids:
        track = scene.vehicles[vehicle_id]
        traj = track.trajectory
        geom = track.geometry
        n = len(traj)
        parts.append(pd.DataFrame({
            "vehicle_id": np.full(n, vehicle_id, dtype=np.int64),
            "frame": traj.frames,
            "x": traj.states[:, 0],
            "y": traj.states[:, 1],
            "psi": traj.states[:, 2],
            "v": traj.states[:, 3],
            "length": geom.length,
            "width": geom.width,
            "lf": geom.lf,
            "lr": geom.lr,
            "lane_id": track.lane_ids,
            "preceding": track.preceding,
            "space_headway": track.space_headway,
        }))
    if not parts:
        return pd.DataFrame({column: [] for column in SCENE_COLUMNS})
    return pd.concat(parts, ignore_index=True)[list(SCENE_COLUMNS)]


def ingest_ngsim(
    source: Union[str, Path, IO[str]],
    config: Optional[IngestSettings] = None,
    dt: float = 0.1,
) -> Scene:
    """
    Read an NGSIM trajectory table into a Scene in SI units

    Args:
        source: Path or text stream of the comma-separated export
        config: Units, mainline lanes, axis alignment and lane geometry options
        dt: Frame period (s)

    Returns:
        Scene restricted to the configured mainline lanes

    Raises:
        SchemaException: A required column is missing
        EmptySceneException: No row survives lane filtering
    """
    config = config or IngestSettings()
    raw = pd.read_csv(source).rename(columns=COLUMN_ALIASES)
    missing = set(REQUIRED_COLUMNS) - set(raw.columns)
    if missing:
        raise SchemaException(
            "Trajectory table is missing required columns",
            missing_columns=list(missing),
            source=str(source) if isinstance(source, (str, Path)) else None,
        )

    if config.location is not None and "Location" in raw.columns:
        raw = raw[raw["Location"] == config.location]

    raw = raw[raw["Lane_ID"].isin(config.lanes)]
    if raw.empty:
        raise EmptySceneException("No vehicle on the mainline lanes", lanes=config.lanes)

    raw = (
        raw.drop_duplicates(subset=["Vehicle_ID", "Frame_ID"], keep="first")
        .sort_values(["Vehicle_ID", "Frame_ID"], kind="stable")
        .reset_index(drop=True)
    )

    counts = raw.groupby("Vehicle_ID")["Frame_ID"].transform("size")
    short = raw.loc[counts < 2, "Vehicle_ID"].unique()
    if len(short):
        logger.info(f"Dropping {len(short)} vehicles with a single mainline frame")
    raw = raw[counts >= 2].reset_index(drop=True)

    scale = config.units.to_meters
    lateral = raw["Local_X"].to_numpy(dtype=float) * scale
    along = raw["Local_Y"].to_numpy(dtype=float) * scale
    x, y = (along, -lateral) if config.swap_axes else (lateral, along)
    length = raw["v_Length"].to_numpy(dtype=float) * scale

    canonical = pd.DataFrame({
        "vehicle_id": raw["Vehicle_ID"].astype(np.int64),
        "frame": raw["Frame_ID"].astype(np.int64),
        "x": x,
        "y": y,
        "v": np.maximum(raw["v_Vel"].to_numpy(dtype=float) * scale, 0.0),
        "length": length,
        "width": raw["v_Width"].to_numpy(dtype=float) * scale,
        "lf": length * config.axle_ratio,
        "lr": length * config.axle_ratio,
        "lane_id": raw["Lane_ID"].astype(np.int64),
        "preceding": raw["Preceding"].fillna(NO_LEAD).astype(np.int64),
        "space_headway": raw["Space_Headway"].to_numpy(dtype=float) * scale,
    })
    canonical["psi"] = np.concatenate([
        derive_heading(rows["x"].to_numpy(), rows["y"].to_numpy(), config.smoothing_window)
        for _, rows in canonical.groupby("vehicle_id", sort=True)
    ])

    if config.lane_file is not None:
        lanes = load_lanes(config.lane_file)
    else:
        lanes = estimate_lanes(canonical, config.lanes, config.lane_width, config.centerline_margin)

    scene = scene_from_frame(canonical, lanes, dt=dt, v0=config.speed_limit)
    logger.info(
        f"Ingested {len(scene.vehicles)} vehicles",
        extra={"rows": len(canonical), "lanes": [lane.lane_id for lane in lanes]},
    )
    return scene


def _arc_lengths(frame: pd.DataFrame, scene: Scene) -> np.ndarray:
    """Arc length of every row along the centerline of its own lane"""
    arc = np.full(len(frame), np.nan)
    lane_col = frame["lane_id"].to_numpy()
    points = frame[["x", "y"]].to_numpy()
    for lane in scene.lanes:
        rows = lane_col == lane.lane_id
        if rows.any():
            arc[rows], _ = lane.project(points[rows])
    return arc


def hygiene_filter(scene: Scene) -> tuple[Scene, FilterReport]:
    """
    Remove vehicles with frame gaps or an implausible recorded lead

    A recorded lead is implausible at a frame when it is absent, in another
    lane, not strictly ahead in arc length, or not among the two nearest
    same-lane vehicles ahead (one ordering swap tolerated). Vehicles at equal
    arc length share a rank. One implausible frame removes the whole vehicle.
    Pointers to removed vehicles are rewritten to the no-lead sentinel.

    Returns:
        Cleaned scene and a report with removal reasons
    """
    report = FilterReport(ingested=len(scene.vehicles))
    if not scene.vehicles:
        return scene, report

    frame = scene_to_frame(scene)

    gaps = frame.groupby("vehicle_id")["frame"].apply(lambda f: bool(np.any(np.diff(f) != 1)))
    gap_ids = set(int(v) for v in gaps[gaps].index)

    frame["s"] = _arc_lengths(frame, scene)
    frame["rank"] = frame.groupby(["frame", "lane_id"])["s"].rank(method="min")
    leads = frame[["vehicle_id", "frame", "lane_id", "s", "rank"]].rename(columns={
        "vehicle_id": "preceding", "lane_id": "lead_lane", "s": "lead_s", "rank": "lead_rank",
    })
    with_lead = frame[frame["preceding"] != NO_LEAD].merge(
        leads, on=["preceding", "frame"], how="left"
    )
    step = with_lead["lead_rank"] - with_lead["rank"]
    inconsistent = (
        with_lead["lead_rank"].isna()
        | (with_lead["lead_lane"] != with_lead["lane_id"])
        | ~step.isin([1.0, 2.0])
        | ~(with_lead["lead_s"] > with_lead["s"])
    )
    lead_ids = set(int(v) for v in with_lead.loc[inconsistent, "vehicle_id"].unique())

    removed: dict[int, FilterReason] = {}
    for vehicle_id in sorted(gap_ids):
        removed[vehicle_id] = FilterReason.FRAME_GAP
    for vehicle_id in sorted(lead_ids - gap_ids):
        removed[vehicle_id] = FilterReason.WRONG_LEAD

    if not removed:
        report.retained = scene.vehicle_ids
        return scene, report

    kept: dict[int, VehicleTrack] = {}
    for vehicle_id in scene.vehicle_ids:
        if vehicle_id in removed:
            continue
        track = scene.vehicles[vehicle_id]
        preceding = np.where(np.isin(track.preceding, list(removed)), NO_LEAD, track.preceding)
        kept[vehicle_id] = VehicleTrack(
            trajectory=track.trajectory,
            geometry=track.geometry,
            lane_ids=track.lane_ids,
            preceding=preceding,
            space_headway=track.space_headway,
        )

    report.retained = sorted(kept)
    report.removed = removed
    logger.info(
        f"Hygiene filter kept {len(kept)} of {report.ingested} vehicles",
        extra={
            "frame_gap": report.count(FilterReason.FRAME_GAP),
            "wrong_lead": report.count(FilterReason.WRONG_LEAD),
        },
    )
    return Scene(vehicles=kept, lanes=scene.lanes, dt=scene.dt, v0=scene.v0), report


def _frame_lookup(frames: np.ndarray, targets: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Indices of `targets` inside sorted `frames` and a mask of exact hits"""
    idx = np.searchsorted(frames, targets)
    clipped = np.minimum(idx, len(frames) - 1)
    return clipped, frames[clipped] == targets


def lead_profile(
    scene: Scene,
    vehicle_id: int,
    source: HeadwaySource = HeadwaySource.GEOMETRY,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Per-frame bumper-to-bumper gap and speed of the recorded lead

    Returns:
        Gap (m) and lead speed (m/s) arrays, NaN where no lead is recorded
    """
    track = scene.vehicles[vehicle_id]
    traj = track.trajectory
    n = len(traj)
    gaps = np.full(n, np.nan)
    speeds = np.full(n, np.nan)

    for lead_id in np.unique(track.preceding):
        lead_id = int(lead_id)
        if lead_id == NO_LEAD or lead_id not in scene.vehicles:
            continue
        lead = scene.vehicles[lead_id]
        rows = np.flatnonzero(track.preceding == lead_id)
        idx, hit = _frame_lookup(lead.trajectory.frames, traj.frames[rows])
        rows, idx = rows[hit], idx[hit]
        if not len(rows):
            continue

        speeds[rows] = lead.trajectory.states[idx, 3]
        if source is HeadwaySource.RECORDED:
            gaps[rows] = track.space_headway[rows] - lead.geometry.length
            continue
        for lane_id in np.unique(track.lane_ids[rows]):
            lane = scene.lane(int(lane_id))
            sel = track.lane_ids[rows] == lane_id
            own_arc, _ = lane.project(traj.positions[rows[sel]])
            lead_arc, _ = lane.project(lead.trajectory.positions[idx[sel]])
            gaps[rows[sel]] = (
                (lead_arc - 0.5 * lead.geometry.length) - (own_arc + 0.5 * track.geometry.length)
            )
    return gaps, speeds


def episode_window(
    scene: Scene,
    vehicle_id: int,
    horizon_frames: int,
    start: int = 0,
    headway_source: HeadwaySource = HeadwaySource.GEOMETRY,
) -> Episode:
    """
    Ground-truth window of one vehicle with the replayed traffic around it

    Raises:
        InsufficientLengthException: Fewer than horizon_frames frames after start
    """
    track = scene.vehicles[vehicle_id]
    available = len(track.trajectory) - start
    if horizon_frames < 2 or available < horizon_frames:
        raise InsufficientLengthException(
            "Trajectory too short for the requested window",
            vehicle_id=vehicle_id, available=available, required=horizon_frames,
        )

    truth = track.trajectory.window(start, horizon_frames)
    frames = truth.frames
    first, last = int(frames[0]), int(frames[-1])

    ids, states, lanes_ids, lengths, widths = [], [], [], [], []
    for other_id in scene.vehicle_ids:
        if other_id == vehicle_id:
            continue
        other = scene.vehicles[other_id]
        o_frames = other.trajectory.frames
        if o_frames[-1] < first or o_frames[0] > last:
            continue
        idx, hit = _frame_lookup(o_frames, frames)
        if not hit.any():
            continue
        block = np.full((len(frames), 4), np.nan)
        block[hit] = other.trajectory.states[idx[hit]]
        lane_row = np.full(len(frames), -1, dtype=np.int64)
        lane_row[hit] = other.lane_ids[idx[hit]]
        ids.append(other_id)
        states.append(block)
        lanes_ids.append(lane_row)
        lengths.append(other.geometry.length)
        widths.append(other.geometry.width)

    gaps, speeds = lead_profile(scene, vehicle_id, headway_source)
    window = slice(start, start + horizon_frames)
    return Episode(
        vehicle_id=vehicle_id,
        truth=truth,
        geometry=track.geometry,
        lane=scene.lane(int(track.lane_ids[start])),
        lanes=scene.lanes,
        v0=scene.v0,
        others_ids=np.array(ids, dtype=np.int64),
        others_states=np.array(states).reshape(len(ids), len(frames), 4),
        others_lane_ids=np.array(lanes_ids, dtype=np.int64).reshape(len(ids), len(frames)),
        others_length=np.array(lengths, dtype=float),
        others_width=np.array(widths, dtype=float),
        lead_gaps=gaps[window],
        lead_speeds=speeds[window],
    )


def save_scene(scene: Scene, path: Path, config: Optional[Settings] = None) -> Path:
    """Write the canonical scene snapshot"""
    header = {
        "dt": repr(scene.dt),
        "v0": repr(scene.v0),
        "lanes": [lane.model_dump(mode="json") for lane in scene.lanes],
        **run_header(config),
    }
    return write_table(path, "scene", scene_to_frame(scene), header)


def load_scene(path: Path) -> Scene:
    """Read a snapshot written by save_scene"""
    header, frame = read_table(path, "scene")
    lanes = [LaneGeometry.model_validate(item) for item in json.loads(header["lanes"])]
    return scene_from_frame(frame, lanes, dt=float(header["dt"]), v0=float(header["v0"]))
