"""Ingestion, hygiene filter and episode extraction tests"""

import math

import numpy as np
import pandas as pd
import pytest

from app.config import IngestSettings
from app.core.enums import FilterReason, HeadwaySource
from app.core.exceptions import (
    ArtifactFormatException,
    EmptySceneException,
    InsufficientLengthException,
    SchemaException,
)
from app.core.models import NO_LEAD, Scene
from app.services.scene_data import (
    derive_heading,
    episode_window,
    hygiene_filter,
    ingest_ngsim,
    lead_profile,
    load_scene,
    save_scene,
)


class TestIngest:
    """NGSIM table to Scene"""

    def test_mainline_vehicles_only(self, ngsim_csv):
        scene = ingest_ngsim(ngsim_csv)
        assert scene.vehicle_ids == [1, 2, 3, 4, 5, 6]
        assert {lane.lane_id for lane in scene.lanes} == {1, 2}

    def test_feet_to_meters_without_axis_swap(self, ngsim_frame, tmp_path):
        """Local_X of 10 ft becomes x = 3.048 m"""
        frame = ngsim_frame[ngsim_frame["Vehicle_ID"] == 1].copy()
        frame["Local_X"] = 10.0
        path = tmp_path / "one.csv"
        frame.to_csv(path, index=False)

        scene = ingest_ngsim(path, IngestSettings(swap_axes=False))
        states = scene.vehicles[1].trajectory.states
        assert states[:, 0] == pytest.approx(np.full(len(states), 3.048))

    def test_axis_swap_puts_road_along_x(self, ngsim_csv):
        scene = ingest_ngsim(ngsim_csv)
        traj = scene.vehicles[1].trajectory
        assert traj.states[:, 1] == pytest.approx(np.full(len(traj), -6.0 * 0.3048))
        assert np.all(np.abs(traj.states[:, 2]) < 0.1)
        assert traj.states[0, 3] == pytest.approx((60.0 + 2.0 * math.cos(1.0)) * 0.3048)

    def test_geometry_from_dimensions(self, ngsim_csv):
        geom = ingest_ngsim(ngsim_csv).vehicles[2].geometry
        assert geom.length == pytest.approx(15.0 * 0.3048)
        assert geom.lf == pytest.approx(0.25 * geom.length)

    def test_missing_column(self, ngsim_frame, tmp_path):
        path = tmp_path / "broken.csv"
        ngsim_frame.drop(columns=["Preceding"]).to_csv(path, index=False)
        with pytest.raises(SchemaException) as exc:
            ingest_ngsim(path)
        assert exc.value.details["missing_columns"] == ["Preceding"]

    def test_no_mainline_rows(self, ngsim_csv):
        with pytest.raises(EmptySceneException):
            ingest_ngsim(ngsim_csv, IngestSettings(lanes=[6]))

    def test_location_filter(self, ngsim_csv):
        with pytest.raises(EmptySceneException):
            ingest_ngsim(ngsim_csv, IngestSettings(location="i-80"))

    def test_meters_without_swap_kept_exactly(self, ngsim_frame, tmp_path):
        """Values already in meters pass through bit for bit"""
        frame = ngsim_frame[ngsim_frame["Vehicle_ID"] == 2].copy()
        for column in ("Local_Y", "v_Vel"):
            frame[column] = np.round(frame[column] * 4.0) / 4.0
        path = tmp_path / "meters.csv"
        frame.to_csv(path, index=False)

        scene = ingest_ngsim(path, IngestSettings(units="meters", swap_axes=False))
        track = scene.vehicles[2]
        expected = frame.sort_values("Frame_ID")
        assert np.array_equal(track.trajectory.states[:, 0], expected["Local_X"].to_numpy())
        assert np.array_equal(track.trajectory.states[:, 1], expected["Local_Y"].to_numpy())
        assert np.array_equal(track.trajectory.states[:, 3], expected["v_Vel"].to_numpy())
        assert track.geometry.length == 15.0
        assert track.geometry.width == 6.0

    def test_duplicate_rows_dropped(self, ngsim_frame, tmp_path):
        path = tmp_path / "dup.csv"
        pd.concat([ngsim_frame, ngsim_frame.iloc[:5]]).to_csv(path, index=False)
        scene = ingest_ngsim(path)
        assert len(scene.vehicles[1].trajectory) == 80


class TestDeriveHeading:
    """Heading from positions"""

    def test_diagonal_motion(self):
        x = np.arange(10, dtype=float)
        assert derive_heading(x, x) == pytest.approx(np.full(10, math.pi / 4))

    def test_stationary_frames_inherit_heading(self):
        x = np.array([0.0, 1.0, 1.0, 1.0, 2.0])
        y = np.zeros(5)
        assert derive_heading(x, y, window=1) == pytest.approx(np.zeros(5))

    def test_wraparound_smoothing(self):
        """Smoothing across +-pi does not average to zero"""
        angles = np.array([math.pi - 0.01, -math.pi + 0.01] * 4)
        x = np.cumsum(np.cos(angles))
        y = np.cumsum(np.sin(angles))
        headings = derive_heading(x, y)
        assert np.all(np.abs(np.abs(headings) - math.pi) < 0.05)


class TestHygieneFilter:
    """Removal of gapped and wrong-lead vehicles"""

    def test_consistent_scene_untouched(self, cruise_scene):
        cleaned, report = hygiene_filter(cruise_scene)
        assert report.retained == [1, 2, 3]
        assert report.removed == {}
        assert cleaned is cruise_scene

    def test_frame_gap_removed(self, lanes, make_track):
        n = 20
        frames = np.concatenate((np.arange(1, 11), np.arange(12, 22)))
        gapped = make_track(1, np.arange(n) * 2.0, np.zeros(n), np.full(n, 20.0), 1, frames=frames)
        ok = make_track(2, 100.0 + np.arange(n) * 2.0, np.zeros(n), np.full(n, 20.0), 1)
        scene = Scene(vehicles={1: gapped, 2: ok}, lanes=lanes)

        cleaned, report = hygiene_filter(scene)
        assert report.removed == {1: FilterReason.FRAME_GAP}
        assert cleaned.vehicle_ids == [2]

    def test_lead_behind_removed(self, lanes, make_track):
        """A recorded preceding vehicle that is actually behind is implausible"""
        n = 20
        x = np.arange(n) * 2.0
        front = make_track(1, 100.0 + x, np.zeros(n), np.full(n, 20.0), 1, preceding=2)
        back = make_track(2, x, np.zeros(n), np.full(n, 20.0), 1)
        scene = Scene(vehicles={1: front, 2: back}, lanes=lanes)

        _, report = hygiene_filter(scene)
        assert report.removed == {1: FilterReason.WRONG_LEAD}

    def test_lead_in_other_lane_removed(self, lanes, make_track):
        n = 20
        x = np.arange(n) * 2.0
        follower = make_track(1, x, np.zeros(n), np.full(n, 20.0), 1, preceding=2)
        other = make_track(2, 50.0 + x, np.full(n, -3.66), np.full(n, 20.0), 2)
        scene = Scene(vehicles={1: follower, 2: other}, lanes=lanes)

        _, report = hygiene_filter(scene)
        assert report.count(FilterReason.WRONG_LEAD) == 1

    def test_one_ordering_swap_tolerated(self, lanes, make_track):
        """Second-nearest vehicle ahead is accepted as lead"""
        n = 20
        x = np.arange(n) * 2.0
        tracks = {
            1: make_track(1, x, np.zeros(n), np.full(n, 20.0), 1, preceding=3),
            2: make_track(2, 30.0 + x, np.zeros(n), np.full(n, 20.0), 1),
            3: make_track(3, 60.0 + x, np.zeros(n), np.full(n, 20.0), 1),
        }
        _, report = hygiene_filter(Scene(vehicles=tracks, lanes=lanes))
        assert report.removed == {}

    def test_lead_at_same_arc_length_removed(self, lanes, make_track):
        """Side-by-side in one lane is not following"""
        n = 20
        x = np.arange(n) * 2.0
        tracks = {
            1: make_track(1, x, np.full(n, 0.4), np.full(n, 20.0), 1, preceding=2),
            2: make_track(2, x, np.full(n, -0.4), np.full(n, 20.0), 1),
        }
        _, report = hygiene_filter(Scene(vehicles=tracks, lanes=lanes))
        assert report.removed == {1: FilterReason.WRONG_LEAD}

    def test_report_partitions_ingested_vehicles(self, lanes, make_track):
        n = 20
        x = np.arange(n) * 2.0
        frames = np.concatenate((np.arange(1, 11), np.arange(12, 22)))
        tracks = {
            1: make_track(1, 100.0 + x, np.zeros(n), np.full(n, 20.0), 1, preceding=2),
            2: make_track(2, x, np.zeros(n), np.full(n, 20.0), 1),
            3: make_track(3, x, np.full(n, -3.66), np.full(n, 20.0), 2, frames=frames),
            4: make_track(4, 50.0 + x, np.full(n, -3.66), np.full(n, 20.0), 2),
        }
        _, report = hygiene_filter(Scene(vehicles=tracks, lanes=lanes))
        assert sorted(report.retained + list(report.removed)) == [1, 2, 3, 4]
        assert not set(report.retained) & set(report.removed)
        assert report.ingested == 4
        assert report.count(FilterReason.FRAME_GAP) + report.count(FilterReason.WRONG_LEAD) == 2

    def test_removed_lead_pointer_rewritten(self, lanes, make_track):
        n = 20
        x = np.arange(n) * 2.0
        frames = np.concatenate((np.arange(1, 11), np.arange(12, 22)))
        tracks = {
            1: make_track(1, 50.0 + x, np.zeros(n), np.full(n, 20.0), 1, frames=frames),
            2: make_track(2, x, np.zeros(n), np.full(n, 20.0), 1,
                          preceding=np.where(np.arange(n) < 10, 1, NO_LEAD)),
        }
        cleaned, report = hygiene_filter(Scene(vehicles=tracks, lanes=lanes))
        assert report.removed == {1: FilterReason.FRAME_GAP}
        assert np.all(cleaned.vehicles[2].preceding == NO_LEAD)


class TestEpisode:
    """Episode windows and lead profiles"""

    def test_window_shapes(self, cruise_scene):
        episode = episode_window(cruise_scene, 2, 100)
        assert episode.horizon == 100
        assert list(episode.others_ids) == [1, 3]
        assert episode.others_states.shape == (2, 100, 4)
        assert episode.lane.lane_id == 1

    def test_start_offset(self, cruise_scene):
        episode = episode_window(cruise_scene, 2, 50, start=20)
        assert episode.truth.frames[0] == 21
        assert episode.truth.states[0, 0] == pytest.approx(20.0 + 20.0 * 2.0)

    def test_too_short(self, cruise_scene):
        with pytest.raises(InsufficientLengthException) as exc:
            episode_window(cruise_scene, 2, 151)
        assert exc.value.details["available_frames"] == 150

    def test_absent_vehicles_are_nan(self, lanes, make_track):
        n = 30
        x = np.arange(n) * 2.0
        tracks = {
            1: make_track(1, x, np.zeros(n), np.full(n, 20.0), 1),
            2: make_track(2, 80.0 + x[:10], np.zeros(10), np.full(10, 20.0), 1,
                          frames=np.arange(5, 15)),
        }
        episode = episode_window(Scene(vehicles=tracks, lanes=lanes), 1, 30)
        assert np.isnan(episode.others_states[0, 0, 0])
        assert episode.others_states[0, 4, 0] == pytest.approx(80.0)
        assert episode.others_lane_ids[0, 0] == -1

    def test_geometric_lead_gap(self, cruise_scene):
        """30 m between centers minus two half lengths"""
        gaps, speeds = lead_profile(cruise_scene, 2)
        assert gaps == pytest.approx(np.full(150, 30.0 - 4.8))
        assert speeds == pytest.approx(np.full(150, 20.0))

    def test_no_lead_is_nan(self, cruise_scene):
        gaps, speeds = lead_profile(cruise_scene, 3)
        assert np.all(np.isnan(gaps)) and np.all(np.isnan(speeds))

    def test_recorded_headway_source(self, ngsim_csv):
        scene = ingest_ngsim(ngsim_csv)
        gaps, _ = lead_profile(scene, 2, HeadwaySource.RECORDED)
        assert gaps == pytest.approx(np.full(80, (90.0 - 15.0) * 0.3048))


class TestSnapshot:
    """Scene snapshot files"""

    def test_round_trip(self, ngsim_csv, tmp_path):
        scene, _ = hygiene_filter(ingest_ngsim(ngsim_csv))
        path = save_scene(scene, tmp_path / "scene.csv")
        loaded = load_scene(path)

        assert loaded.vehicle_ids == scene.vehicle_ids
        assert loaded.dt == scene.dt and loaded.v0 == scene.v0
        for vid in scene.vehicle_ids:
            assert np.array_equal(loaded.vehicles[vid].trajectory.states,
                                  scene.vehicles[vid].trajectory.states)
            assert np.array_equal(loaded.vehicles[vid].preceding, scene.vehicles[vid].preceding)
        assert [lane.centerline for lane in loaded.lanes] == [
            lane.centerline for lane in scene.lanes
        ]

    def test_wrong_kind_rejected(self, tmp_path):
        path = tmp_path / "not_a_scene.csv"
        path.write_text("# drivecode:store schema_version=1\nvehicle_id\n1\n", encoding="utf-8")
        with pytest.raises(ArtifactFormatException):
            load_scene(path)
