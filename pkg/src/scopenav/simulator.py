"""Tracker stand-in: replays or synthesizes scope paths and streams them.

Replaces the EM tracker + streaming toolkit for desk work: a TCP client
that pushes TRANSFORM messages (device "ScopeTip") at a fixed rate, with
optional Gaussian position noise and sample dropout, finishing with a
STATUS message.  The matching ``record`` helper is a single-connection
server that appends received poses to the trajectory file format.
"""

import socket
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from scopenav.geometry.mesh import Mesh, MeshError, point_in_mesh
from scopenav.geometry.trajectory import TrackedSample, Trajectory, save_trajectory
from scopenav.igtl import (
    IGTL_PORT,
    MessageFramer,
    StatusBody,
    TransformBody,
    encode_message,
)
from scopenav.rigid import RigidTransform, quaternion_to_rotation, rotation_to_quaternion

MAX_REJECTION_ATTEMPTS = 1_000_000


class SimulatorError(Exception):
    pass


@dataclass
class SimScenario:
    mode: str = "replay"  # "replay" or "synthetic"
    trajectory: str | None = None  # replay source
    mesh: str | None = None        # synthetic source
    seed: int = 0
    n_waypoints: int = 8
    rate_hz: float = 40.0
    noise_sigma_mm: float = 0.0
    dropout_prob: float = 0.0
    time_scale: float = 1.0
    tracker_to_ct: RigidTransform | None = None

    def __post_init__(self):
        if self.mode not in ("replay", "synthetic"):
            raise SimulatorError(f"unknown mode {self.mode!r}")
        if not 0 < self.rate_hz <= 1000:
            raise SimulatorError("rate_hz must be in (0, 1000]")
        if not 0 <= self.dropout_prob < 1:
            raise SimulatorError("dropout_prob must be in [0, 1)")
        if self.noise_sigma_mm < 0:
            raise SimulatorError("noise_sigma_mm must be >= 0")
        if self.time_scale <= 0:
            raise SimulatorError("time_scale must be positive")


def load_scenario(path: str | Path) -> SimScenario:
    """Key-value scenario file; tracker_to_ct names a transform matrix file."""
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise SimulatorError(f"{path}: expected key: value lines")
    base = Path(path).parent
    transform = None
    if raw.get("tracker_to_ct"):
        from scopenav.rigid import load_transform

        transform = load_transform(base / str(raw.pop("tracker_to_ct")))
    known = {f for f in SimScenario.__dataclass_fields__}
    unknown = set(raw) - known
    if unknown:
        raise SimulatorError(f"{path}: unknown scenario keys {sorted(unknown)}")
    for key in ("trajectory", "mesh"):
        if raw.get(key):
            raw[key] = str(base / str(raw[key]))
    try:
        return SimScenario(**raw, tracker_to_ct=transform)
    except TypeError as exc:
        raise SimulatorError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------------------
# synthetic path generation


def _sample_interior(mesh: Mesh, n: int, rng: np.random.Generator) -> np.ndarray:
    lo, hi = mesh.bounds()
    points = []
    attempts = 0
    while len(points) < n:
        attempts += 1
        if attempts > MAX_REJECTION_ATTEMPTS:
            raise SimulatorError(
                f"interior sampling failed after {MAX_REJECTION_ATTEMPTS} attempts; "
                "mesh volume too thin?"
            )
        candidate = rng.uniform(lo, hi)
        if point_in_mesh(mesh, candidate, rng):
            points.append(candidate)
    return np.array(points)


def _greedy_chain(points: np.ndarray, start_near: np.ndarray) -> np.ndarray:
    """Order points by nearest-neighbor hops, starting closest to start_near."""
    remaining = list(range(len(points)))
    current = int(np.linalg.norm(points - start_near, axis=1).argmin())
    order = [current]
    remaining.remove(current)
    while remaining:
        dists = np.linalg.norm(points[remaining] - points[order[-1]], axis=1)
        current = remaining[int(dists.argmin())]
        order.append(current)
        remaining.remove(current)
    return points[order]


def _catmull_rom_segment(p0, p1, p2, p3, ts: np.ndarray) -> np.ndarray:
    t = ts[:, None]
    return 0.5 * (
        2 * p1
        + (-p0 + p2) * t
        + (2 * p0 - 5 * p1 + 4 * p2 - p3) * t**2
        + (-p0 + 3 * p1 - 3 * p2 + p3) * t**3
    )


def _spline_dense(waypoints: np.ndarray, samples_per_segment: int = 32) -> list[np.ndarray]:
    """Dense polyline per spline segment, endpoints clamped by duplication."""
    padded = np.vstack([waypoints[:1], waypoints, waypoints[-1:]])
    ts = np.linspace(0.0, 1.0, samples_per_segment, endpoint=False)
    segments = []
    for i in range(len(waypoints) - 1):
        segments.append(
            _catmull_rom_segment(padded[i], padded[i + 1], padded[i + 2], padded[i + 3], ts)
        )
    segments[-1] = np.vstack([segments[-1], waypoints[-1:]])
    return segments


def _resample_by_arc_length(polyline: np.ndarray, step_mm: float) -> np.ndarray:
    deltas = np.linalg.norm(np.diff(polyline, axis=0), axis=1)
    cumulative = np.concatenate([[0.0], np.cumsum(deltas)])
    total = cumulative[-1]
    if total == 0.0:
        return polyline[:1]
    targets = np.arange(0.0, total, step_mm)
    if total - targets[-1] > 1e-9:
        targets = np.append(targets, total)
    out = np.empty((len(targets), 3))
    for c in range(3):
        out[:, c] = np.interp(targets, cumulative, polyline[:, c])
    return out


def synthesize_path(
    mesh: Mesh,
    n_waypoints: int,
    seed: int,
    step_mm: float = 1.0,
    sample_rate_hz: float = 40.0,
) -> Trajectory:
    """Plausible scope path inside a watertight mesh, deterministic per seed.

    Waypoints are uniform interior samples chained greedily from the point
    nearest the mesh's lowest vertex (the inlet proxy), joined by a
    Catmull-Rom spline resampled at ``step_mm`` arc-length steps.  Any
    segment that leaves the mesh gets its far waypoint re-drawn.
    """
    if n_waypoints < 2:
        raise SimulatorError("need at least 2 waypoints")
    rng = np.random.default_rng(seed)
    interior = _sample_interior(mesh, n_waypoints, rng)
    inlet = mesh.vertices[int(np.argmin(mesh.vertices[:, 2]))]
    waypoints = _greedy_chain(interior, inlet)

    max_redraws = 200 * n_waypoints
    redraws = 0
    while True:
        segments = _spline_dense(waypoints)
        bad = None
        for i, seg in enumerate(segments):
            if not all(point_in_mesh(mesh, p, rng) for p in seg):
                bad = i
                break
        if bad is None:
            dense = np.vstack(segments)  # segments exclude their endpoint, no duplicates
            positions = _resample_by_arc_length(dense, step_mm)
            outside = [
                k for k, p in enumerate(positions) if not point_in_mesh(mesh, p, rng)
            ]
            if not outside:
                break
            # a resampled point slipped out between dense samples: blame the
            # segment that owns it and redraw
            seg_ends = np.cumsum([len(s) for s in segments])
            deltas = np.linalg.norm(np.diff(dense, axis=0), axis=1)
            cum = np.concatenate([[0.0], np.cumsum(deltas)])
            bad_len = min(outside[0] * step_mm, cum[-1])
            dense_idx = min(int(np.searchsorted(cum, bad_len)), len(dense) - 1)
            bad = int(np.searchsorted(seg_ends, dense_idx, side="right"))
        redraws += 1
        if redraws > max_redraws:
            raise SimulatorError("could not keep the spline inside the mesh")
        waypoints[min(bad + 1, len(waypoints) - 1)] = _sample_interior(mesh, 1, rng)[0]

    samples = [
        TrackedSample(i / sample_rate_hz, p) for i, p in enumerate(positions)
    ]
    return Trajectory(samples, frame="ct")


# ---------------------------------------------------------------------------
# streaming


@dataclass
class StreamSummary:
    sent: int
    dropped: int
    duration_s: float


def _load_stream_source(scenario: SimScenario) -> Trajectory:
    if scenario.mode == "replay":
        if not scenario.trajectory:
            raise SimulatorError("replay mode needs a trajectory file")
        from scopenav.geometry.trajectory import load_trajectory

        return load_trajectory(scenario.trajectory)
    if not scenario.mesh:
        raise SimulatorError("synthetic mode needs a mesh file")
    from scopenav.geometry.mesh import load_obj

    mesh = load_obj(scenario.mesh)
    return synthesize_path(mesh, scenario.n_waypoints, scenario.seed)


def _open_stream_socket(host: str, port: int, listen: bool, ready=None) -> socket.socket:
    """Connect out (default) or, with listen=True, accept one inbound peer.

    The listening role exists for interoperability with tools that only
    connect as clients.
    """
    if not listen:
        return socket.create_connection((host, port), timeout=10.0)
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as server:
        server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        server.bind((host, port))
        server.listen(1)
        server.settimeout(30.0)
        if ready is not None:
            ready.set()
        conn, _ = server.accept()
        return conn


def stream(
    scenario: SimScenario,
    host: str = "127.0.0.1",
    port: int = IGTL_PORT,
    device_name: str = "ScopeTip",
    listen: bool = False,
    ready=None,
) -> StreamSummary:
    """Push the scenario's trajectory to a peer.

    Positions are converted to the tracker frame when tracker_to_ct is
    set (the source path lives in CT space), so a server registered with
    that same transform recovers the original coordinates.
    """
    trajectory = _load_stream_source(scenario)
    to_tracker = scenario.tracker_to_ct.invert() if scenario.tracker_to_ct else None
    rng = np.random.default_rng(scenario.seed + 1)

    interval = 1.0 / (scenario.rate_hz * scenario.time_scale)
    sent = dropped = 0
    start = time.monotonic()
    try:
        with _open_stream_socket(host, port, listen, ready) as sock:
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            deadline = time.monotonic()
            for sample in trajectory.samples:
                deadline += interval
                delay = deadline - time.monotonic()
                if delay > 0:
                    time.sleep(delay)
                if scenario.dropout_prob > 0 and rng.random() < scenario.dropout_prob:
                    dropped += 1
                    continue
                position = sample.position
                if to_tracker is not None:
                    position = to_tracker.apply(position)
                if scenario.noise_sigma_mm > 0:
                    position = position + rng.normal(0.0, scenario.noise_sigma_mm, 3)
                rotation = (
                    quaternion_to_rotation(sample.orientation)
                    if sample.orientation is not None
                    else np.eye(3)
                )
                if to_tracker is not None:
                    rotation = to_tracker.rotation @ rotation
                msg = encode_message(
                    TransformBody(rotation, position), device_name=device_name
                )
                sock.sendall(msg)
                sent += 1
            sock.sendall(
                encode_message(StatusBody(message="stream complete"), device_name=device_name)
            )
    except OSError as exc:
        role = "listen on" if listen else "stream to"
        raise SimulatorError(f"{role} {host}:{port} failed: {exc}") from exc
    return StreamSummary(sent=sent, dropped=dropped, duration_s=time.monotonic() - start)


def record(
    port: int,
    output_path: str | Path,
    host: str = "127.0.0.1",
    timeout_s: float = 30.0,
    ready=None,
) -> Trajectory:
    """Accept one streaming connection and log received poses to a file.

    Stops at the peer's STATUS message or disconnect; each sample gets the
    local receive timestamp.  ``ready`` (a threading.Event) is set once
    the socket is listening, for callers that start the sender next.
    """
    samples: list[TrackedSample] = []
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as server:
        server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        server.bind((host, port))
        server.listen(1)
        server.settimeout(timeout_s)
        if ready is not None:
            ready.set()
        conn, _ = server.accept()
        with conn:
            conn.settimeout(timeout_s)
            framer = MessageFramer()
            done = False
            while not done:
                try:
                    chunk = conn.recv(65536)
                except socket.timeout as exc:
                    raise SimulatorError("recording timed out") from exc
                if not chunk:
                    if not framer.at_boundary:
                        raise SimulatorError("stream ended mid-message")
                    break
                for header, body in framer.feed(chunk):
                    if isinstance(body, TransformBody):
                        samples.append(
                            TrackedSample(
                                time.time(),
                                body.translation,
                                rotation_to_quaternion(body.rotation),
                            )
                        )
                    elif isinstance(body, StatusBody):
                        done = True
    trajectory = Trajectory(samples, frame="tracker")
    save_trajectory(output_path, trajectory)
    return trajectory
