"""Driving-code extraction and KNN prediction tests"""

import time

import numpy as np
import pytest
from pydantic import ValidationError

from app.config import KnnSettings, Settings
from app.core.enums import CodeFeature, SpeedFeature
from app.core.exceptions import (
    EmptyStoreException,
    EmptyWindowException,
    InsufficientLengthException,
    NeighborCountException,
)
from app.core.models import DrivingCode, IdmParams, LaneGeometry, Scene, StoreEntry, Trajectory
from app.services.code_predictor import (
    KnnStore,
    extract_code,
    load_predictions,
    predict_all,
    predict_params,
    save_predictions,
    vehicle_code,
)

LANE_WIDTH = 3.66
LANE = LaneGeometry(lane_id=1, centerline=[(-100.0, 0.0), (1000.0, 0.0)], width=3.66)


def _window(v, y=0.0, n=10):
    t = np.arange(n) * 0.1
    states = np.column_stack((v * t, np.broadcast_to(y, (n,)), np.zeros(n), np.full(n, v)))
    return Trajectory(vehicle_id=1, frames=np.arange(1, n + 1), states=states, dt=0.1)


def _lane_change_y(n):
    return np.where(np.arange(n) < n // 2, 0.0, -LANE_WIDTH)


def _entry(vehicle_id, code, scale=1.0):
    return StoreEntry(
        vehicle_id=vehicle_id,
        params=IdmParams(a=scale, b=2.0 * scale, T=1.0, d0=2.0, d1=scale),
        code=code,
    )


class TestExtractCode:
    """Statistics of an observation window"""

    def test_constant_following(self):
        """Centered at 20 m/s with a lead 40 m ahead"""
        code = extract_code(_window(20.0), LANE, np.full(10, 40.0), np.full(10, 20.0))
        assert (code.tau, code.nu, code.omega) == pytest.approx((0.0, 20.0, 2.0))

    def test_signed_offset(self):
        code = extract_code(_window(20.0, y=-0.5), LANE, np.full(10, np.nan), np.full(10, np.nan))
        assert code.tau == pytest.approx(-0.5)

    def test_stationary_vehicle_has_no_headway(self):
        code = extract_code(_window(0.0), LANE, np.full(10, 8.0), np.zeros(10))
        assert code.omega is None

    def test_no_lead_has_no_headway(self):
        code = extract_code(_window(20.0), LANE, np.full(10, np.nan), np.full(10, np.nan))
        assert code.omega is None

    def test_headway_only_over_frames_with_lead(self):
        gaps = np.concatenate((np.full(5, 20.0), np.full(5, np.nan)))
        code = extract_code(_window(20.0), LANE, gaps, np.full(10, 20.0))
        assert code.omega == pytest.approx(1.0)

    def test_relative_speed(self):
        code = extract_code(_window(20.0), LANE, np.full(10, 40.0), np.full(10, 18.0),
                            speed_feature=SpeedFeature.RELATIVE)
        assert code.nu == pytest.approx(2.0)

    def test_mask(self):
        code = extract_code(_window(20.0), LANE, np.full(10, 40.0), np.full(10, 20.0),
                            features=[CodeFeature.OMEGA])
        assert code.tau is None and code.nu is None
        assert code.omega == pytest.approx(2.0)

    def test_lead_data_shorter_than_window(self):
        with pytest.raises(EmptyWindowException):
            extract_code(_window(20.0), LANE, np.full(5, 40.0), np.full(5, 20.0))

    def test_single_frame_window_is_invalid(self):
        """A one-frame window cannot be built, so it never reaches extraction"""
        with pytest.raises(ValidationError, match="at least two frames"):
            _window(20.0, n=1)

    def test_offset_measured_from_each_frames_lane(self, lanes):
        """Centered in lane 1 for 50 frames, then centered in lane 2"""
        window = _window(20.0, y=_lane_change_y(100), n=100)
        per_frame = [lanes[0]] * 50 + [lanes[1]] * 50
        code = extract_code(window, per_frame, np.full(100, np.nan), np.full(100, np.nan))
        assert code.tau == pytest.approx(0.0, abs=1e-9)

    def test_vehicle_code_follows_lane_changes(self, lanes, make_track):
        n = 100
        t = np.arange(n) * 0.1
        track = make_track(1, 20.0 * t, _lane_change_y(n), np.full(n, 20.0), 1)
        track = track.model_copy(update={"lane_ids": np.where(np.arange(n) < n // 2, 1, 2)})
        scene = Scene(vehicles={1: track}, lanes=lanes, dt=0.1, v0=29.06)

        assert vehicle_code(scene, 1).tau == pytest.approx(0.0, abs=1e-9)
        assert vehicle_code(scene, 1, frames=60).tau == pytest.approx(0.0, abs=1e-9)

    def test_vehicle_code_uses_first_frames(self, cruise_scene):
        code = vehicle_code(cruise_scene, 2, frames=10)
        assert (code.tau, code.nu, code.omega) == pytest.approx((0.0, 20.0, (30.0 - 4.8) / 20.0))

    def test_vehicle_code_rejects_short_window(self, cruise_scene):
        with pytest.raises(EmptyWindowException):
            vehicle_code(cruise_scene, 2, frames=1)

    def test_vehicle_code_rejects_window_beyond_trajectory(self, cruise_scene):
        with pytest.raises(InsufficientLengthException) as exc:
            vehicle_code(cruise_scene, 2, frames=200)
        assert exc.value.details == {"vehicle_id": 2, "available_frames": 150,
                                     "required_frames": 200}


class TestKnnStore:
    """Nearest-neighbor parameter prediction"""

    def test_exact_match_at_k1(self, store_entries):
        store = KnnStore(store_entries)
        target = store_entries[12]
        assert predict_params(store, target.code, k=1) == target.params

    def test_full_store_equals_average(self, store_entries):
        store = KnnStore(store_entries)
        k = len(store_entries)
        assert store.predict_params(store_entries[0].code, k) == store.average_params()

    def test_prediction_inside_neighbor_hull(self, store_entries):
        store = KnnStore(store_entries)
        query = DrivingCode(tau=0.1, nu=22.0, omega=1.5)
        idx = store.neighbors(query, 8)
        rows = np.array([store.entries[i].params.to_array() for i in idx])
        predicted = store.predict_params(query, 8).to_array()
        assert np.all(predicted >= rows.min(axis=0)) and np.all(predicted <= rows.max(axis=0))

    def test_empty_store(self):
        with pytest.raises(EmptyStoreException):
            KnnStore([]).predict_params(DrivingCode(tau=0.0, nu=20.0, omega=2.0), 1)

    @pytest.mark.parametrize("k", [0, 41])
    def test_neighbor_count_out_of_range(self, store_entries, k):
        with pytest.raises(NeighborCountException) as exc:
            KnnStore(store_entries).predict_params(store_entries[0].code, k)
        assert exc.value.details["store_size"] == 40

    def test_ties_resolve_by_vehicle_id(self):
        code = DrivingCode(tau=0.0, nu=20.0, omega=2.0)
        entries = [
            _entry(8, code, scale=3.0),
            _entry(3, code, scale=1.0),
            _entry(5, DrivingCode(tau=1.0, nu=30.0, omega=1.0), scale=2.0),
        ]
        assert KnnStore(entries).predict_params(code, 1).a == 1.0

    def test_scale_invariance(self, store_entries):
        """Rescaling one code dimension everywhere keeps the neighbor set"""
        def scaled(code):
            return DrivingCode(tau=code.tau, nu=code.nu * 1000.0, omega=code.omega)

        query = DrivingCode(tau=-0.2, nu=18.0, omega=2.2)
        plain = KnnStore(store_entries).neighbors(query, 5)
        rescaled_store = KnnStore([
            StoreEntry(vehicle_id=e.vehicle_id, params=e.params, code=scaled(e.code))
            for e in store_entries
        ])
        assert set(rescaled_store.neighbors(scaled(query), 5)) == set(plain)

    def test_missing_query_dimension_ignored(self, store_entries):
        store = KnnStore(store_entries)
        query = DrivingCode(tau=0.1, nu=25.0, omega=None)
        assert list(store.neighbors(query, 6)) == list(
            store.neighbors(query, 6, [CodeFeature.TAU, CodeFeature.NU])
        )

    def test_missing_store_dimension_rescaled(self):
        """An entry without headway is compared on the remaining dimensions"""
        entries = [
            _entry(1, DrivingCode(tau=0.0, nu=20.0, omega=None), scale=1.0),
            _entry(2, DrivingCode(tau=0.5, nu=25.0, omega=2.0), scale=2.0),
            _entry(3, DrivingCode(tau=-0.5, nu=15.0, omega=1.0), scale=3.0),
        ]
        store = KnnStore(entries)
        assert store.predict_params(DrivingCode(tau=0.0, nu=20.0, omega=1.5), 1).a == 1.0

    def test_degenerate_dimension_flagged(self):
        entries = [
            _entry(i, DrivingCode(tau=0.0, nu=10.0 + i, omega=1.0 + 0.1 * i), scale=float(i))
            for i in range(1, 6)
        ]
        store = KnnStore(entries)
        assert store.degenerate_dims == [CodeFeature.TAU]
        assert np.all(store.std > 0.0)
        query = DrivingCode(tau=0.0, nu=12.0, omega=1.2)
        assert store.predict_params(query, 1) == entries[1].params

    def test_latency(self):
        """Single predictions on a 2000-entry store stay under a millisecond"""
        rng = np.random.default_rng(3)
        entries = [
            _entry(i, DrivingCode(tau=rng.normal(), nu=rng.uniform(5, 30),
                                  omega=rng.uniform(0.5, 3)))
            for i in range(2000)
        ]
        store = KnnStore(entries)
        query = DrivingCode(tau=0.0, nu=20.0, omega=1.5)
        store.predict_params(query, 8)

        repeats = 200
        start = time.perf_counter()
        for _ in range(repeats):
            store.predict_params(query, 8)
        assert (time.perf_counter() - start) / repeats < 1e-3


class TestPredictAll:
    """Bulk prediction over a scene"""

    def test_every_vehicle_predicted(self, cruise_scene, store_entries):
        store = KnnStore.from_entries(store_entries)
        predictions, skipped = predict_all(store, cruise_scene, Settings(), observe_frames=10, k=4)
        assert sorted(predictions) == [1, 2, 3]
        assert skipped == {}

    def test_window_longer_than_scene_skips_vehicles(self, cruise_scene, store_entries):
        store = KnnStore(store_entries)
        predictions, skipped = predict_all(store, cruise_scene, Settings(), observe_frames=200)
        assert predictions == {}
        assert sorted(skipped) == [1, 2, 3]
        assert skipped[2] == "Trajectory shorter than the observation window"

    def test_store_errors_propagate(self, cruise_scene, store_entries):
        store = KnnStore(store_entries[:2])
        with pytest.raises(NeighborCountException):
            predict_all(store, cruise_scene, Settings(knn=KnnSettings(k=3)))

    def test_prediction_file_round_trip(self, cruise_scene, store_entries, tmp_path):
        predictions, _ = predict_all(KnnStore(store_entries), cruise_scene)
        path = save_predictions(predictions, tmp_path / "params.csv")
        assert load_predictions(path) == predictions
