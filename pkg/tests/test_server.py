"""End-to-end server tests over real sockets: IGTL in, WebSocket/HTTP out."""

import asyncio
import json
import socket
import threading
import time

import httpx
import numpy as np
import pytest
from websockets.sync.client import connect as ws_connect

from scopenav.geometry.analytics import analyze_trajectory
from scopenav.geometry.mesh import save_obj
from scopenav.geometry.trajectory import load_trajectory
from scopenav.igtl import StatusBody, TransformBody, encode_message
from scopenav.rigid import RigidTransform, save_transform
from scopenav.server.config import SessionConfig
from scopenav.server.service import NavServer
from scopenav.volume import Volume, save_nrrd
from tests.conftest import make_cube

EYE = np.eye(3)


class ServerHandle:
    def __init__(self, config: SessionConfig, session_id: str = "itest"):
        self.server = NavServer(config, session_id=session_id)
        self.thread = threading.Thread(
            target=lambda: asyncio.run(self.server.run()), daemon=True
        )

    def __enter__(self):
        self.thread.start()
        if not self.server.ready.wait(15.0):
            raise RuntimeError("server did not become ready")
        return self

    def __exit__(self, *exc):
        self.server.request_shutdown()
        self.thread.join(timeout=15.0)

    @property
    def igtl_port(self):
        return self.server.igtl_port

    @property
    def viewer_port(self):
        return self.server.viewer_port

    @property
    def session_dir(self):
        return self.server.session.session_dir


class Viewer:
    """Headless protocol client standing in for the browser UI.

    Messages not matched by recv_until stay buffered, since broadcasts
    (slice, registration, ...) are sent before the command ack.
    """

    def __init__(self, port: int):
        self.ws = ws_connect(f"ws://127.0.0.1:{port}/ws", open_timeout=10)
        self._counter = 0
        self._buffer: list[dict] = []

    def close(self):
        self.ws.close()

    def recv(self, timeout: float = 10.0) -> dict:
        if self._buffer:
            return self._buffer.pop(0)
        return json.loads(self.ws.recv(timeout=timeout))

    def recv_until(self, predicate, timeout: float = 10.0) -> dict:
        for i, message in enumerate(self._buffer):
            if predicate(message):
                return self._buffer.pop(i)
        deadline = time.monotonic() + timeout
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise TimeoutError("expected message not received")
            message = json.loads(self.ws.recv(timeout=remaining))
            if predicate(message):
                return message
            self._buffer.append(message)

    def send_cmd(self, cmd: str, **fields) -> str:
        self._counter += 1
        cmd_id = f"c{self._counter}"
        self.ws.send(json.dumps({"cmd": cmd, "id": cmd_id, **fields}))
        return cmd_id

    def wait_ack(self, cmd_id: str, timeout: float = 10.0) -> dict:
        return self.recv_until(
            lambda m: m.get("type") == "ack" and m.get("id") == cmd_id, timeout
        )


class Tracker:
    """Raw IGTL client pushing poses under test control."""

    def __init__(self, port: int):
        self.sock = socket.create_connection(("127.0.0.1", port), timeout=10)
        self.sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)

    def send_pose(self, position, rotation=EYE):
        body = TransformBody(rotation, np.asarray(position, dtype=np.float64))
        self.sock.sendall(encode_message(body, device_name="ScopeTip"))

    def send_status(self, message="stream complete"):
        self.sock.sendall(encode_message(StatusBody(message=message), device_name="ScopeTip"))

    def close(self):
        self.sock.close()


@pytest.fixture
def identity_config(tmp_path):
    reg = tmp_path / "identity.txt"
    save_transform(reg, RigidTransform.identity())
    mesh_path = tmp_path / "anatomy.obj"
    save_obj(mesh_path, make_cube(size=60.0))
    return SessionConfig(
        session_dir=str(tmp_path / "sessions"),
        registration_matrix=str(reg),
        mesh_full=str(mesh_path),
        igtl_port=0,
        viewer_port=0,
        flush_interval_s=0.1,
        metrics_interval_s=0.2,
    )


class TestViewerChannel:
    def test_hello_then_snapshot(self, identity_config):
        with ServerHandle(identity_config) as handle:
            viewer = Viewer(handle.viewer_port)
            try:
                hello = viewer.recv()
                snapshot = viewer.recv()
                assert hello["type"] == "hello"
                assert hello["assets"]["meshes"]["full"] == "/assets/full.obj"
                assert snapshot["type"] == "snapshot"
                assert snapshot["registered"] is True
            finally:
                viewer.close()

    def test_pose_and_trail_flow(self, identity_config):
        with ServerHandle(identity_config) as handle:
            viewer = Viewer(handle.viewer_port)
            tracker = Tracker(handle.igtl_port)
            try:
                viewer.recv_until(lambda m: m["type"] == "snapshot")
                for i in range(5):
                    tracker.send_pose([float(i * 2), 0.0, 0.0])
                poses = []
                while len(poses) < 5:
                    msg = viewer.recv_until(lambda m: m["type"] == "pose")
                    poses.append(msg)
                assert poses[-1]["ct_xyz"][0] == 8.0
                seqs = [p["seq"] for p in poses]
                assert seqs == sorted(seqs)
                assert [p["sample_count"] for p in poses] == sorted(
                    p["sample_count"] for p in poses
                )
            finally:
                tracker.close()
                viewer.close()

    def test_snapshot_no_regression_for_late_viewer(self, identity_config):
        with ServerHandle(identity_config) as handle:
            tracker = Tracker(handle.igtl_port)
            try:
                for i in range(20):
                    tracker.send_pose([float(i), 0.0, 0.0])
                tracker.send_status()
                time.sleep(0.5)
                viewer = Viewer(handle.viewer_port)
                try:
                    snapshot = viewer.recv_until(lambda m: m["type"] == "snapshot")
                    assert snapshot["sample_count"] == 20
                    assert len(snapshot["trail"]) == 20  # 1 mm apart > 0.5 mm decimation
                finally:
                    viewer.close()
            finally:
                tracker.close()

    def test_unknown_command_acked_with_error(self, identity_config):
        with ServerHandle(identity_config) as handle:
            viewer = Viewer(handle.viewer_port)
            try:
                cmd_id = viewer.send_cmd("warp_drive")
                ack = viewer.wait_ack(cmd_id)
                assert ack["ok"] is False
            finally:
                viewer.close()


class TestFiducialWorkflow:
    def test_capture_and_register(self, tmp_path):
        mesh_path = tmp_path / "anatomy.obj"
        save_obj(mesh_path, make_cube(size=60.0))
        config = SessionConfig(
            session_dir=str(tmp_path / "sessions"),
            mesh_full=str(mesh_path),
            igtl_port=0,
            viewer_port=0,
            capture_window_ms=300,
        )
        offset = np.array([25.0, -10.0, 5.0])  # ct = tracker + offset
        slots = {
            "A": np.array([0.0, 0.0, 0.0]),
            "B": np.array([30.0, 0.0, 0.0]),
            "C": np.array([0.0, 30.0, 0.0]),
            "D": np.array([0.0, 0.0, 30.0]),
        }
        with ServerHandle(config) as handle:
            viewer = Viewer(handle.viewer_port)
            tracker = Tracker(handle.igtl_port)
            try:
                viewer.recv_until(lambda m: m["type"] == "snapshot")
                for label, ct_point in slots.items():
                    cmd_id = viewer.send_cmd("capture_fiducial", label=label, window_ms=300)
                    deadline = time.monotonic() + 0.3
                    while time.monotonic() < deadline:
                        tracker.send_pose(ct_point - offset)
                        time.sleep(0.02)
                    ack = viewer.wait_ack(cmd_id)
                    assert ack["ok"] is True, ack
                    assert ack["n_samples"] >= 2

                cmd_id = viewer.send_cmd(
                    "register",
                    ct_fiducials=[
                        {"label": label, "xyz": [float(v) for v in point]}
                        for label, point in slots.items()
                    ],
                )
                ack = viewer.wait_ack(cmd_id)
                assert ack["ok"] is True, ack
                assert ack["fre_mm"] < 1e-6
                reg_event = viewer.recv_until(lambda m: m["type"] == "registration")
                assert reg_event["fre_mm"] < 1e-6
                matrix = np.array(reg_event["matrix"])
                assert np.allclose(matrix[:3, 3], offset, atol=1e-6)

                # post-registration poses map into CT space
                tracker.send_pose(np.array([1.0, 2.0, 3.0]) - offset)
                pose = viewer.recv_until(lambda m: m["type"] == "pose")
                assert np.allclose(pose["ct_xyz"], [1.0, 2.0, 3.0], atol=1e-5)
            finally:
                tracker.close()
                viewer.close()

    def test_capture_without_stream_fails(self, identity_config):
        with ServerHandle(identity_config) as handle:
            viewer = Viewer(handle.viewer_port)
            try:
                cmd_id = viewer.send_cmd("capture_fiducial", label="A", window_ms=150)
                ack = viewer.wait_ack(cmd_id)
                assert ack["ok"] is False
                assert "no samples" in ack["error"]
            finally:
                viewer.close()


class TestSliceAndAssets:
    @pytest.fixture
    def volume_config(self, identity_config, tmp_path):
        rng = np.random.default_rng(5)
        vol = Volume(
            rng.integers(-900, 1800, (16, 14, 12)).astype(np.int16),
            np.array([1.0, 1.0, 2.5]),
            np.array([-8.0, -7.0, -15.0]),
        )
        path = tmp_path / "ct.nrrd"
        save_nrrd(path, vol)
        identity_config.volume = str(path)
        return identity_config

    def test_slice_request_and_fetch(self, volume_config):
        with ServerHandle(volume_config) as handle:
            viewer = Viewer(handle.viewer_port)
            try:
                viewer.recv_until(lambda m: m["type"] == "snapshot")
                cmd_id = viewer.send_cmd("set_slice", axis=2, index=6)
                ack = viewer.wait_ack(cmd_id)
                assert ack["ok"] is True
                event = viewer.recv_until(lambda m: m["type"] == "slice")
                url = f"http://127.0.0.1:{handle.viewer_port}{event['url']}"
                png = httpx.get(url, timeout=10)
                assert png.status_code == 200
                assert png.headers["content-type"] == "image/png"
                assert png.content[:4] == b"\x89PNG"
                missing = httpx.get(
                    f"http://127.0.0.1:{handle.viewer_port}/slices/slice-999999.png",
                    timeout=10,
                )
                assert missing.status_code == 404
            finally:
                viewer.close()

    def test_mesh_asset_served(self, identity_config):
        with ServerHandle(identity_config) as handle:
            response = httpx.get(
                f"http://127.0.0.1:{handle.viewer_port}/assets/full.obj", timeout=10
            )
            assert response.status_code == 200
            assert response.text.startswith("v ")

    def test_annotation_broadcast(self, identity_config):
        with ServerHandle(identity_config) as handle:
            v1 = Viewer(handle.viewer_port)
            v2 = Viewer(handle.viewer_port)
            try:
                for v in (v1, v2):
                    v.recv_until(lambda m: m["type"] == "snapshot")
                cmd_id = v1.send_cmd(
                    "annotate", position=[5.0, 6.0, 7.0], color=[0, 200, 0, 255],
                    label="stone A",
                )
                ack = v1.wait_ack(cmd_id)
                assert ack["ok"] is True
                event = v2.recv_until(lambda m: m["type"] == "annotation")
                assert event["action"] == "add"
                assert event["annotation"]["position"] == [5.0, 6.0, 7.0]
                rm_id = v1.send_cmd("remove_annotation", annotation_id=ack["annotation_id"])
                assert v1.wait_ack(rm_id)["ok"] is True
                removal = v2.recv_until(lambda m: m["type"] == "annotation")
                assert removal["action"] == "remove"
            finally:
                v1.close()
                v2.close()


class TestMetricsAndExport:
    def test_stream_metrics_export_equivalence(self, identity_config):
        rng = np.random.default_rng(11)
        positions = rng.uniform(-20, 20, (300, 3)).astype(np.float32).astype(np.float64)
        with ServerHandle(identity_config) as handle:
            viewer = Viewer(handle.viewer_port)
            tracker = Tracker(handle.igtl_port)
            try:
                viewer.recv_until(lambda m: m["type"] == "snapshot")
                for p in positions:
                    tracker.send_pose(p)
                tracker.send_status()
                metrics = viewer.recv_until(
                    lambda m: m["type"] == "metrics" and m["sample_count"] == 300
                )
                assert metrics["hull_volume_mm3"] is not None

                cmd_id = viewer.send_cmd("export")
                ack = viewer.wait_ack(cmd_id)
                assert ack["ok"] is True
                manifest = ack["manifest"]
                assert manifest["counts"]["received"] == 300
                assert manifest["counts"]["flushed"] == 300

                ct_file = handle.session_dir / manifest["files"]["trajectory_ct"]
                offline = analyze_trajectory(
                    load_trajectory(ct_file, frame="ct"), identity_config.threshold
                )
                assert offline.hull_volume_mm3 == manifest["metrics"]["hull_volume_mm3"]
                assert offline.path_length_mm == manifest["metrics"]["path_length_mm"]
                assert offline.outlier_fraction == manifest["metrics"]["outlier_fraction"]
                # the final live broadcast matches the export too
                assert metrics["hull_volume_mm3"] == manifest["metrics"]["hull_volume_mm3"]
            finally:
                tracker.close()
                viewer.close()

    def test_export_on_shutdown(self, identity_config):
        with ServerHandle(identity_config, session_id="shutdown-test") as handle:
            tracker = Tracker(handle.igtl_port)
            for i in range(10):
                tracker.send_pose([float(i), 0.0, 0.0])
            tracker.close()
            time.sleep(0.5)
            session_dir = handle.session_dir
        assert (session_dir / "manifest.json").exists()
        raw = load_trajectory(session_dir / "trajectory_raw.csv")
        assert len(raw) == 10

    def test_corrupt_igtl_drops_connection_only(self, identity_config):
        with ServerHandle(identity_config) as handle:
            bad = socket.create_connection(("127.0.0.1", handle.igtl_port), timeout=5)
            bad.sendall(b"\x00\x01garbage-that-is-not-a-valid-header-xxxxxxxxxxxxxxxxxxxxxxxx")
            time.sleep(0.3)
            bad.close()
            # server still alive and serving
            tracker = Tracker(handle.igtl_port)
            tracker.send_pose([1.0, 2.0, 3.0])
            tracker.send_status()
            tracker.close()
            time.sleep(0.3)
            response = httpx.get(
                f"http://127.0.0.1:{handle.viewer_port}/healthz", timeout=10
            )
            assert response.status_code == 200
            assert response.json()["sample_count"] >= 1
