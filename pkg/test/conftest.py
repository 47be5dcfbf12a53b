"""Pytest configuration and fixtures"""

import numpy as np
import pandas as pd
import pytest

from app.config import Settings
from app.core.models import (
    NO_LEAD,
    DrivingCode,
    IdmParams,
    LaneGeometry,
    Scene,
    StoreEntry,
    Trajectory,
    VehicleGeometry,
    VehicleTrack,
)

LANE_WIDTH = 3.66


def _track(vehicle_id, x, y, v, lane_id, preceding=NO_LEAD, frames=None, length=4.8, width=1.8):
    n = len(x)
    frames = np.arange(1, n + 1) if frames is None else np.asarray(frames)
    states = np.column_stack((x, y, np.zeros(n), v))
    return VehicleTrack(
        trajectory=Trajectory(vehicle_id=vehicle_id, frames=frames, states=states, dt=0.1),
        geometry=VehicleGeometry.from_dimensions(length, width),
        lane_ids=np.full(n, lane_id),
        preceding=np.full(n, preceding) if np.isscalar(preceding) else preceding,
        space_headway=np.full(n, np.nan),
    )


@pytest.fixture
def lanes():
    """Three straight lanes along +x, lane 1 leftmost"""
    return [
        LaneGeometry(lane_id=k, centerline=[(-100.0, -LANE_WIDTH * (k - 1)),
                                            (3000.0, -LANE_WIDTH * (k - 1))], width=LANE_WIDTH)
        for k in (1, 2, 3)
    ]


@pytest.fixture
def make_track():
    """Factory for a straight-line VehicleTrack"""
    return _track


@pytest.fixture
def cruise_scene(lanes):
    """
    Constant-speed traffic with consistent leads

    Lane 1: vehicle 2 follows vehicle 1, 30 m apart at 20 m/s.
    Lane 2: vehicle 3 alone at 25 m/s.
    """
    n = 150
    t = np.arange(n) * 0.1
    tracks = {
        1: _track(1, 50.0 + 20.0 * t, np.zeros(n), np.full(n, 20.0), 1),
        2: _track(2, 20.0 + 20.0 * t, np.zeros(n), np.full(n, 20.0), 1, preceding=1),
        3: _track(3, 0.0 + 25.0 * t, np.full(n, -LANE_WIDTH), np.full(n, 25.0), 2),
    }
    return Scene(vehicles=tracks, lanes=lanes, dt=0.1, v0=29.06)


@pytest.fixture
def braking_lead_scene(lanes):
    """
    Follower at 25 m/s behind a lead that brakes from 20 to 12 m/s and recovers

    The follower (vehicle 2) starts 25 m behind the lead's rear bumper.
    """
    n = 150
    t = np.arange(n) * 0.1
    lead_v = 20.0 - 8.0 * np.sin(np.clip(t / 6.0, 0.0, 1.0) * np.pi) ** 2
    lead_x = 60.0 + np.concatenate(([0.0], np.cumsum(lead_v[:-1] * 0.1)))
    follower_x = 60.0 - 4.8 - 25.0 + 25.0 * t
    tracks = {
        1: _track(1, lead_x, np.zeros(n), lead_v, 1),
        2: _track(2, follower_x, np.zeros(n), np.full(n, 25.0), 1, preceding=1),
    }
    return Scene(vehicles=tracks, lanes=lanes, dt=0.1, v0=29.06)


@pytest.fixture
def store_entries():
    """Small store of synthetic entries with distinct codes"""
    rng = np.random.default_rng(7)
    entries = []
    for i in range(1, 41):
        entries.append(StoreEntry(
            vehicle_id=i,
            params=IdmParams(
                a=float(rng.uniform(0.5, 3.0)),
                b=float(rng.uniform(1.0, 4.0)),
                T=float(rng.uniform(0.5, 2.5)),
                d0=float(rng.uniform(0.5, 5.0)),
                d1=float(rng.uniform(0.0, 10.0)),
            ),
            code=DrivingCode(
                tau=float(rng.normal(0.0, 0.3)),
                nu=float(rng.uniform(10.0, 30.0)),
                omega=float(rng.uniform(0.8, 3.0)),
            ),
        ))
    return entries


@pytest.fixture
def fast_settings():
    """Settings small enough for unit-test fits"""
    return Settings(
        estimation={"horizon": 40, "restarts": 1, "max_iter": 30},
        metrics={"horizon": 40},
        knn={"k": 2, "observe_frames": 10},
    )


def _ngsim_rows():
    """Two platoons in feet: lane 1 at 60 ft/s, lane 2 at 50 ft/s, one auxiliary-lane vehicle"""
    rows = []
    frames = np.arange(1, 81)
    t = (frames - 1) * 0.1
    platoons = {1: (60.0, (1, 2, 3)), 2: (50.0, (4, 5, 6))}
    for lane, (speed, ids) in platoons.items():
        for rank, vid in enumerate(ids):
            local_y = 400.0 - 90.0 * rank + speed * t + 2.0 * np.sin(t + vid)
            vel = speed + 2.0 * np.cos(t + vid)
            preceding = ids[rank - 1] if rank > 0 else 0
            for f, ly, v in zip(frames, local_y, vel):
                rows.append({
                    "Vehicle_ID": vid, "Frame_ID": int(f), "Local_X": 6.0 + 12.0 * (lane - 1),
                    "Local_Y": ly, "v_Vel": v, "v_Length": 15.0, "v_Width": 6.0,
                    "Lane_ID": lane, "Preceding": preceding,
                    "Space_Headway": 90.0 if preceding else 0.0, "Location": "us-101",
                })
    for f in frames:
        rows.append({
            "Vehicle_ID": 99, "Frame_ID": int(f), "Local_X": 78.0,
            "Local_Y": 100.0 + 40.0 * f * 0.1,
            "v_Vel": 40.0, "v_Length": 15.0, "v_Width": 6.0, "Lane_ID": 7, "Preceding": 0,
            "Space_Headway": 0.0, "Location": "us-101",
        })
    return pd.DataFrame(rows)


@pytest.fixture
def ngsim_frame():
    return _ngsim_rows()


@pytest.fixture
def ngsim_csv(tmp_path):
    """Synthetic NGSIM export written to disk"""
    path = tmp_path / "trajectories.csv"
    _ngsim_rows().to_csv(path, index=False)
    return path


@pytest.fixture(scope="session")
def ngsim_export(tmp_path_factory):
    """The same export, shared by tests that run the whole pipeline"""
    path = tmp_path_factory.mktemp("ngsim") / "trajectories.csv"
    _ngsim_rows().to_csv(path, index=False)
    return path
