"""State-core tests: ingest/decimation, captures, registration, slices, export."""

import json

import numpy as np
import pytest

from scopenav.geometry.analytics import analyze_trajectory
from scopenav.geometry.mesh import save_obj
from scopenav.geometry.trajectory import load_trajectory
from scopenav.rigid import RigidTransform, save_transform
from scopenav.server.config import SessionConfig
from scopenav.server.session import NavSession, SessionError, load_ct_fiducials
from scopenav.volume import Volume, save_nrrd
from tests.conftest import make_cube

EYE = np.eye(3)


@pytest.fixture
def session(tmp_path):
    config = SessionConfig(session_dir=str(tmp_path / "sessions"))
    s = NavSession(config, session_id="test")
    yield s
    s.close()


@pytest.fixture
def registered_session(tmp_path):
    reg_path = tmp_path / "identity.txt"
    save_transform(reg_path, RigidTransform.identity())
    config = SessionConfig(
        session_dir=str(tmp_path / "sessions"), registration_matrix=str(reg_path)
    )
    s = NavSession(config, session_id="regtest")
    yield s
    s.close()


class TestIngest:
    def test_pose_before_registration(self, session):
        events = session.ingest_pose(1.0, np.array([1.0, 2.0, 3.0]), EYE)
        assert events == []
        assert session.raw_pose is not None
        assert session.ct_pose is None
        assert session.trail == []
        assert session.sample_count == 1

    def test_identical_poses_decimated(self, registered_session):
        s = registered_session
        p = np.array([5.0, 5.0, 5.0])
        s.ingest_pose(1.0, p, EYE)
        s.ingest_pose(1.1, p, EYE)
        s.ingest_pose(1.2, p, EYE)
        assert len(s.trail) == 1
        assert s.sample_count == 3
        assert len(s.ct_samples) == 3  # full-resolution log is never decimated

    def test_straight_sweep_trail_bound(self, registered_session):
        s = registered_session
        xs = np.linspace(0.0, 100.0, 1000)
        for i, x in enumerate(xs):
            s.ingest_pose(float(i), np.array([x, 0.0, 0.0]), EYE)
        # 100 mm at 0.5 mm decimation: at most 201 trail points
        assert len(s.trail) <= 201

    def test_trail_capacity_eviction(self, tmp_path):
        config = SessionConfig(session_dir=str(tmp_path / "s"), trail_capacity=10,
                               decimation_mm=0.0)
        reg = tmp_path / "id.txt"
        save_transform(reg, RigidTransform.identity())
        config.registration_matrix = str(reg)
        s = NavSession(config, session_id="cap")
        try:
            for i in range(25):
                s.ingest_pose(float(i), np.array([float(i), 0, 0]), EYE)
            assert len(s.trail) == 10
            assert s.trail[0][0] == 15.0
        finally:
            s.close()

    def test_raw_log_written(self, session, tmp_path):
        rng = np.random.default_rng(1)
        positions = rng.uniform(-10, 10, (30, 3))
        for i, p in enumerate(positions):
            session.ingest_pose(float(i), p, EYE)
        session.flush_log()
        logged = load_trajectory(session.session_dir / "trajectory_raw.csv")
        assert np.array_equal(logged.positions, positions)

    def test_flush_batch_counts(self, tmp_path):
        config = SessionConfig(session_dir=str(tmp_path / "s"), flush_batch=10)
        s = NavSession(config, session_id="fb")
        try:
            for i in range(25):
                s.ingest_pose(float(i), np.zeros(3), EYE)
            assert s.flushed_count == 20  # two full batches, 5 pending
            s.flush_log()
            assert s.flushed_count == 25
        finally:
            s.close()


class TestCaptureAndRegister:
    def test_capture_averages_window(self, session):
        session.begin_capture("A", now=10.0, window_ms=1000)
        session.ingest_pose(10.2, np.array([1.0, 0.0, 0.0]), EYE)
        session.ingest_pose(10.5, np.array([3.0, 0.0, 0.0]), EYE)
        session.ingest_pose(11.5, np.array([99.0, 0.0, 0.0]), EYE)  # past deadline
        capture, events = session.finish_capture("A")
        assert capture.n_samples_averaged == 2
        assert np.allclose(capture.tracker_point, [2.0, 0.0, 0.0])
        assert events[0]["type"] == "capture"

    def test_capture_no_samples(self, session):
        session.begin_capture("A", now=0.0, window_ms=100)
        with pytest.raises(SessionError):
            session.finish_capture("A")

    def test_register_from_captures(self, session):
        # tracker frame = ct frame shifted by (10, 0, 0)
        offset = np.array([10.0, 0.0, 0.0])
        slots = {
            "A": np.array([0.0, 0.0, 0.0]),
            "B": np.array([20.0, 0.0, 0.0]),
            "C": np.array([0.0, 20.0, 0.0]),
            "D": np.array([0.0, 0.0, 20.0]),
        }
        t = 0.0
        for label, ct_point in slots.items():
            session.begin_capture(label, now=t, window_ms=500)
            for k in range(3):
                session.ingest_pose(t + 0.1 * k, ct_point - offset, EYE)
            session.finish_capture(label)
            t += 1.0
        result, events = session.register(slots)
        assert result.fre < 1e-9
        assert np.allclose(result.transform.translation, offset)
        assert events[0]["type"] == "registration"
        # trail restarts at registration
        assert session.trail == [] and session.ct_samples == []
        session.ingest_pose(t + 1.0, np.array([5.0, 5.0, 5.0]) - offset, EYE)
        assert np.allclose(session.ct_pose, [5.0, 5.0, 5.0])

    def test_register_too_few_matched(self, session):
        session.begin_capture("A", 0.0, 100)
        session.ingest_pose(0.05, np.zeros(3), EYE)
        session.finish_capture("A")
        with pytest.raises(SessionError, match="label-matched"):
            session.register({"A": np.zeros(3), "X": np.ones(3), "Y": np.ones(3)})

    def test_ct_fiducials_file(self, tmp_path):
        path = tmp_path / "fids.csv"
        path.write_text("A, 1, 2, 3\nB, 4, 5, 6\n")
        fids = load_ct_fiducials(path)
        assert np.allclose(fids["B"], [4, 5, 6])
        path2 = tmp_path / "dup.csv"
        path2.write_text("A, 1, 2, 3\nA, 4, 5, 6\n")
        with pytest.raises(SessionError):
            load_ct_fiducials(path2)


class TestAnnotations:
    def test_annotate_explicit_position(self, session):
        annotation, events = session.annotate_stone(
            position=np.array([1.0, 2.0, 3.0]), color=(0, 255, 0, 255), label="upper pole"
        )
        assert annotation.id in session.annotations
        assert events[0]["action"] == "add"

    def test_annotate_at_tip_requires_registration(self, session):
        with pytest.raises(SessionError):
            session.annotate_stone()

    def test_annotate_at_tip(self, registered_session):
        s = registered_session
        s.ingest_pose(0.0, np.array([7.0, 8.0, 9.0]), EYE)
        annotation, _ = s.annotate_stone()
        assert np.allclose(annotation.position, [7.0, 8.0, 9.0])

    def test_remove_unknown(self, session):
        with pytest.raises(SessionError):
            session.remove_annotation("nope")

    def test_remove(self, session):
        annotation, _ = session.annotate_stone(position=np.zeros(3))
        events = session.remove_annotation(annotation.id)
        assert events[0]["action"] == "remove"
        assert session.annotations == {}


class TestSlices:
    @pytest.fixture
    def volume_session(self, tmp_path):
        rng = np.random.default_rng(3)
        vol = Volume(
            rng.integers(-500, 1500, (12, 10, 8)).astype(np.int16),
            np.array([1.0, 1.0, 2.0]),
            np.zeros(3),
        )
        vol_path = tmp_path / "ct.nrrd"
        save_nrrd(vol_path, vol)
        config = SessionConfig(session_dir=str(tmp_path / "s"), volume=str(vol_path))
        s = NavSession(config, session_id="vol")
        yield s
        s.close()

    def test_axis_slice(self, volume_session):
        active, events = volume_session.set_slice({"axis": 2, "index": 3})
        assert active["image_id"].startswith("slice-")
        png = volume_session.get_slice_png(active["image_id"])
        assert png is not None and png[:4] == b"\x89PNG"
        assert events[0]["descriptor"]["width"] == 12
        assert events[0]["descriptor"]["height"] == 10

    def test_oblique_slice(self, volume_session):
        basis = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]
        active, _ = volume_session.set_slice(
            {"origin": [0.0, 0.0, 4.0], "basis": basis, "width": 16, "height": 16,
             "spacing": [0.5, 0.5]}
        )
        assert volume_session.get_slice_png(active["image_id"]) is not None

    def test_no_volume(self, session):
        with pytest.raises(SessionError):
            session.set_slice({"axis": 0, "index": 0})

    def test_bad_plane(self, volume_session):
        with pytest.raises(SessionError):
            volume_session.set_slice({"axis": 2, "index": 999})

    def test_anatomy_mode(self, session):
        events = session.set_anatomy_mode("collecting_system")
        assert session.anatomy_mode == "collecting_system"
        assert events[0]["mode"] == "collecting_system"
        with pytest.raises(SessionError):
            session.set_anatomy_mode("xray")


class TestMetricsAndExport:
    def test_cube_corner_metrics(self, registered_session):
        s = registered_session
        corners = np.array(
            [[x, y, z] for x in (0.0, 10.0) for y in (0.0, 10.0) for z in (0.0, 10.0)]
        )
        t = 0.0
        for _ in range(10):
            for corner in corners:
                s.ingest_pose(t, corner, EYE)
                t += 0.025
        events = s.metrics(now=100.0, force=True)
        assert events[0]["hull_volume_mm3"] == pytest.approx(1000.0, rel=1e-9)

    def test_metrics_rate_limited(self, registered_session):
        s = registered_session
        for i in range(8):
            s.ingest_pose(float(i), np.random.default_rng(i).uniform(0, 10, 3), EYE)
        assert s.metrics(now=0.0) != []
        assert s.metrics(now=0.5) == []  # within the 1 s interval
        assert s.metrics(now=1.5) != []

    def test_empty_metrics_absent(self, session):
        events = session.metrics(now=0.0, force=True)
        assert events[0]["hull_volume_mm3"] is None
        assert events[0]["path_length_mm"] is None

    def test_export_offline_equivalence(self, registered_session):
        s = registered_session
        rng = np.random.default_rng(7)
        for i, p in enumerate(rng.uniform(-20, 20, (500, 3))):
            s.ingest_pose(i * 0.025, p, EYE)
        manifest = s.export()
        ct_path = s.session_dir / manifest["files"]["trajectory_ct"]
        offline = analyze_trajectory(load_trajectory(ct_path, frame="ct"), s.config.threshold)
        assert offline.hull_volume_mm3 == manifest["metrics"]["hull_volume_mm3"]
        assert offline.path_length_mm == manifest["metrics"]["path_length_mm"]
        assert offline.outlier_fraction == manifest["metrics"]["outlier_fraction"]
        written = json.loads((s.session_dir / "manifest.json").read_text())
        assert written["metrics"] == manifest["metrics"]

    def test_export_files_present(self, registered_session, tmp_path):
        s = registered_session
        for i in range(10):
            s.ingest_pose(float(i), np.array([float(i), 0, 0]), EYE)
        s.annotate_stone(position=np.array([1.0, 1.0, 1.0]))
        manifest = s.export()
        for name in manifest["files"].values():
            assert (s.session_dir / name).exists()
        annotations = json.loads((s.session_dir / "annotations.json").read_text())
        assert len(annotations) == 1

    def test_snapshot_shape(self, registered_session):
        s = registered_session
        s.ingest_pose(0.0, np.array([1.0, 1.0, 1.0]), EYE)
        snap = s.snapshot()
        assert snap["registered"] is True
        assert snap["sample_count"] == 1
        assert snap["trail"] == [[1.0, 1.0, 1.0]]
        assert snap["type"] == "snapshot"

    def test_hull_monotone_as_samples_append(self, registered_session):
        s = registered_session
        rng = np.random.default_rng(3)
        last = 0.0
        for i in range(200):
            s.ingest_pose(i * 0.025, rng.uniform(0, 30, 3), EYE)
            if i >= 20 and i % 25 == 0:
                events = s.metrics(now=float(i), force=True)
                volume = events[0]["hull_volume_mm3"]
                assert volume is None or volume >= last - 1e-9
                if volume is not None:
                    last = volume


class TestHello:
    def test_hello_lists_assets(self, tmp_path):
        mesh_path = tmp_path / "anatomy.obj"
        save_obj(mesh_path, make_cube(size=50.0))
        config = SessionConfig(session_dir=str(tmp_path / "s"), mesh_full=str(mesh_path))
        s = NavSession(config, session_id="h")
        try:
            hello = s.hello()
            assert hello["assets"]["meshes"] == {"full": "/assets/full.obj"}
            assert hello["config"]["threshold"] == 3.0
        finally:
            s.close()
