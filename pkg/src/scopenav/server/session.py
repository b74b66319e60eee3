"""Session state core: single-writer navigation state, no networking.

The async service drives this object from one task; every mutating call
returns the broadcast messages it produced so the shell can fan them out
to viewers.  All positions entering here are tracker-frame mm; CT-frame
state exists only once a registration is set.
"""

import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from scopenav.geometry.analytics import TrajectoryReport, analyze_trajectory
from scopenav.geometry.mesh import Mesh, load_obj
from scopenav.geometry.trajectory import TrackedSample, Trajectory, save_trajectory
from scopenav.rigid import (
    FiducialPair,
    RegistrationResult,
    RigidTransform,
    load_transform,
    rotation_to_quaternion,
    save_transform,
    solve_rigid,
)
from scopenav.server.config import SessionConfig
from scopenav.volume import (
    Volume,
    VolumeError,
    load_nrrd,
    reslice_plane,
    slice_axis,
    slice_to_png,
)

SLICE_CACHE_SIZE = 64


class SessionError(Exception):
    pass


@dataclass
class StoneAnnotation:
    id: str
    position: np.ndarray
    color: tuple[int, int, int, int]
    label: str
    created_at: float

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "position": [float(v) for v in self.position],
            "color": list(self.color),
            "label": self.label,
            "created_at": self.created_at,
        }


@dataclass
class FiducialCapture:
    label: str
    tracker_point: np.ndarray
    n_samples_averaged: int


class _CaptureAccumulator:
    def __init__(self, label: str, deadline: float):
        self.label = label
        self.deadline = deadline
        self.total = np.zeros(3)
        self.count = 0

    def add(self, position: np.ndarray) -> None:
        self.total += position
        self.count += 1

    def finish(self) -> FiducialCapture:
        if self.count == 0:
            raise SessionError(f"no samples received during capture {self.label!r}")
        return FiducialCapture(self.label, self.total / self.count, self.count)


def load_ct_fiducials(path: str | Path) -> dict[str, np.ndarray]:
    """CSV rows: label, x, y, z (mm, CT frame)."""
    points: dict[str, np.ndarray] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 4:
                raise SessionError(f"{path}:{lineno}: expected 'label, x, y, z'")
            if parts[0] in points:
                raise SessionError(f"{path}:{lineno}: duplicate label {parts[0]!r}")
            points[parts[0]] = np.array([float(v) for v in parts[1:]])
    if not points:
        raise SessionError(f"{path}: no fiducials found")
    return points


class NavSession:
    """Owns all live state; exactly one logical writer may call into it."""

    def __init__(self, config: SessionConfig, session_id: str | None = None):
        self.config = config
        self.session_id = session_id or time.strftime("session-%Y%m%d-%H%M%S")
        self.session_dir = Path(config.session_dir) / self.session_id
        self.session_dir.mkdir(parents=True, exist_ok=True)

        self.meshes: dict[str, Mesh] = {}
        for name, path in config.mesh_paths().items():
            self.meshes[name] = load_obj(path)
        self.volume: Volume | None = load_nrrd(config.volume) if config.volume else None
        self.ct_fiducials: dict[str, np.ndarray] = (
            load_ct_fiducials(config.ct_fiducials) if config.ct_fiducials else {}
        )

        self.registration: RegistrationResult | None = None
        self.raw_pose: TrackedSample | None = None
        self.ct_pose: np.ndarray | None = None
        self.trail: list[np.ndarray] = []
        self.ct_samples: list[TrackedSample] = []
        self.annotations: dict[str, StoneAnnotation] = {}
        self.captures: dict[str, FiducialCapture] = {}
        self.anatomy_mode = "full"
        self.live_metrics: TrajectoryReport | None = None
        self.active_slice: dict | None = None

        self.sample_count = 0
        self.flushed_count = 0
        self._seq = 0
        self._last_timestamp = 0.0
        self._annotation_counter = 0
        self._slice_counter = 0
        self._active_captures: dict[str, _CaptureAccumulator] = {}
        self._slice_cache: dict[str, bytes] = {}
        self._last_metrics_time = -1e30

        # unbuffered binary appends: a flushed batch hits the OS as one
        # write, so a killed process never leaves a torn line behind
        self._log_path = self.session_dir / "trajectory_raw.csv"
        self._log = open(self._log_path, "wb", buffering=0)
        self._log.write(b"t_seconds,x_mm,y_mm,z_mm,qw,qx,qy,qz\n")
        self._pending_lines: list[str] = []

        if config.registration_matrix:
            transform = load_transform(config.registration_matrix)
            self.registration = RegistrationResult(transform, fre=0.0, per_point_residuals=[])

    # -- sequencing ---------------------------------------------------------

    def _next_seq(self) -> int:
        self._seq += 1
        return self._seq

    @property
    def seq(self) -> int:
        return self._seq

    # -- ingest -------------------------------------------------------------

    def ingest_pose(self, now: float, position: np.ndarray, rotation: np.ndarray) -> list[dict]:
        """One tracker sample: log it, update CT state, emit pose/trail events."""
        now = max(now, self._last_timestamp)
        self._last_timestamp = now
        position = np.asarray(position, dtype=np.float64)
        self.raw_pose = TrackedSample(now, position)
        self.sample_count += 1

        quat = rotation_to_quaternion(rotation)
        fields = [repr(float(now))] + [repr(float(v)) for v in position]
        fields += [repr(float(v)) for v in quat]
        self._pending_lines.append(",".join(fields) + "\n")
        if len(self._pending_lines) >= self.config.flush_batch:
            self.flush_log()

        for acc in self._active_captures.values():
            if now <= acc.deadline:
                acc.add(position)

        events: list[dict] = []
        if self.registration is not None:
            ct = self.registration.transform.apply(position)
            self.ct_pose = ct
            self.ct_samples.append(TrackedSample(now, ct))
            events.append(
                {
                    "type": "pose",
                    "seq": self._next_seq(),
                    "t": now,
                    "ct_xyz": [float(v) for v in ct],
                    "sample_count": self.sample_count,
                }
            )
            if not self.trail or np.linalg.norm(ct - self.trail[-1]) >= self.config.decimation_mm:
                self.trail.append(ct)
                if len(self.trail) > self.config.trail_capacity:
                    self.trail.pop(0)
                events.append(
                    {
                        "type": "trail_delta",
                        "seq": self._next_seq(),
                        "points": [[float(v) for v in ct]],
                        "trail_length": len(self.trail),
                    }
                )
        return events

    def flush_log(self) -> None:
        if self._pending_lines:
            self._log.write("".join(self._pending_lines).encode("ascii"))
            self.flushed_count = self.sample_count
            self._pending_lines.clear()

    # -- fiducial workflow ----------------------------------------------------

    def begin_capture(self, label: str, now: float, window_ms: float | None = None) -> float:
        """Start averaging incoming samples under ``label``; returns the deadline."""
        if not label:
            raise SessionError("capture needs a label")
        window_ms = window_ms if window_ms is not None else self.config.capture_window_ms
        if window_ms <= 0:
            raise SessionError("capture window must be positive")
        deadline = now + window_ms / 1000.0
        self._active_captures[label] = _CaptureAccumulator(label, deadline)
        return deadline

    def finish_capture(self, label: str) -> tuple[FiducialCapture, list[dict]]:
        acc = self._active_captures.pop(label, None)
        if acc is None:
            raise SessionError(f"no capture in progress for {label!r}")
        capture = acc.finish()
        self.captures[label] = capture
        event = {
            "type": "capture",
            "seq": self._next_seq(),
            "label": label,
            "n_samples": capture.n_samples_averaged,
            "tracker_xyz": [float(v) for v in capture.tracker_point],
        }
        return capture, [event]

    def register(self, ct_points: dict[str, np.ndarray] | None = None) -> tuple[RegistrationResult, list[dict]]:
        """Label-match captures with CT fiducials and solve; trail restarts."""
        ct_points = ct_points if ct_points is not None else self.ct_fiducials
        if not ct_points:
            raise SessionError("no CT fiducials available")
        matched = sorted(set(self.captures) & set(ct_points))
        if len(matched) < 3:
            raise SessionError(
                f"need >= 3 label-matched pairs, have {len(matched)} "
                f"(captures: {sorted(self.captures)}, ct: {sorted(ct_points)})"
            )
        pairs = [
            FiducialPair(label, self.captures[label].tracker_point, ct_points[label])
            for label in matched
        ]
        result = solve_rigid(pairs)
        self.registration = result
        self.trail.clear()
        self.ct_samples.clear()
        self.ct_pose = None
        self.live_metrics = None
        return result, [self._registration_event()]

    def _registration_event(self) -> dict:
        assert self.registration is not None
        return {
            "type": "registration",
            "seq": self._next_seq(),
            "fre_mm": self.registration.fre,
            "matrix": [
                [float(v) for v in row] for row in self.registration.transform.to_matrix()
            ],
        }

    # -- annotations ----------------------------------------------------------

    def annotate_stone(
        self,
        position: np.ndarray | None = None,
        color: tuple[int, int, int, int] = (255, 60, 60, 255),
        label: str = "",
        now: float | None = None,
    ) -> tuple[StoneAnnotation, list[dict]]:
        """Mark a stone at an explicit CT position or at the current scope tip."""
        if position is None:
            if self.ct_pose is None:
                raise SessionError("no registered scope pose to annotate at")
            position = self.ct_pose
        position = np.asarray(position, dtype=np.float64)
        if position.shape != (3,) or not np.isfinite(position).all():
            raise SessionError("annotation position must be a finite 3-vector")
        self._annotation_counter += 1
        annotation = StoneAnnotation(
            id=f"stone-{self._annotation_counter:04d}",
            position=position,
            color=tuple(int(c) for c in color),
            label=label or f"stone {self._annotation_counter}",
            created_at=now if now is not None else time.time(),
        )
        self.annotations[annotation.id] = annotation
        event = {
            "type": "annotation",
            "seq": self._next_seq(),
            "action": "add",
            "annotation": annotation.to_dict(),
        }
        return annotation, [event]

    def remove_annotation(self, annotation_id: str) -> list[dict]:
        if annotation_id not in self.annotations:
            raise SessionError(f"unknown annotation {annotation_id!r}")
        del self.annotations[annotation_id]
        return [
            {
                "type": "annotation",
                "seq": self._next_seq(),
                "action": "remove",
                "id": annotation_id,
            }
        ]

    def set_anatomy_mode(self, mode: str) -> list[dict]:
        if mode not in ("full", "collecting_system"):
            raise SessionError(f"unknown anatomy mode {mode!r}")
        self.anatomy_mode = mode
        return [{"type": "anatomy_mode", "seq": self._next_seq(), "mode": mode}]

    # -- slices ---------------------------------------------------------------

    def set_slice(self, request: dict) -> tuple[dict, list[dict]]:
        """Extract a slice, cache its PNG under a content id, emit a descriptor."""
        if self.volume is None:
            raise SessionError("no volume loaded")
        window = float(request.get("window", self.config.window))
        level = float(request.get("level", self.config.level))
        try:
            if "axis" in request:
                axis = int(request["axis"])
                index = int(request.get("index", 0))
                image = slice_axis(self.volume, axis, index)
                plane = {"kind": "axis", "axis": axis, "index": index}
            elif "origin" in request and "basis" in request:
                basis = np.asarray(request["basis"], dtype=np.float64)
                origin = np.asarray(request["origin"], dtype=np.float64)
                width = int(request.get("width", 256))
                height = int(request.get("height", 256))
                spacing = request.get("spacing", [1.0, 1.0])
                image = reslice_plane(self.volume, origin, basis, width, height,
                                      (float(spacing[0]), float(spacing[1])))
                plane = {"kind": "oblique"}
            else:
                raise SessionError("slice request needs axis/index or origin/basis")
        except VolumeError as exc:
            raise SessionError(f"invalid slice plane: {exc}") from exc

        try:
            png = slice_to_png(image, window, level)
        except Exception as exc:
            raise SessionError(f"slice rendering failed: {exc}") from exc
        self._slice_counter += 1
        image_id = f"slice-{self._slice_counter:06d}"
        self._slice_cache[image_id] = png
        while len(self._slice_cache) > SLICE_CACHE_SIZE:
            self._slice_cache.pop(next(iter(self._slice_cache)))

        descriptor = {
            **plane,
            "width": image.width,
            "height": image.height,
            "pixel_spacing": [float(v) for v in image.pixel_spacing],
            "origin": [float(v) for v in image.origin],
            "basis": [[float(v) for v in b] for b in image.basis],
            "window": window,
            "level": level,
        }
        self.active_slice = {"descriptor": descriptor, "image_id": image_id}
        event = {
            "type": "slice",
            "seq": self._next_seq(),
            "descriptor": descriptor,
            "image_id": image_id,
            "url": f"/slices/{image_id}.png",
        }
        return self.active_slice, [event]

    def get_slice_png(self, image_id: str) -> bytes | None:
        return self._slice_cache.get(image_id)

    # -- metrics ----------------------------------------------------------------

    def ct_trajectory(self) -> Trajectory:
        return Trajectory(list(self.ct_samples), frame="ct")

    def metrics(self, now: float, force: bool = False) -> list[dict]:
        """Recompute live metrics, rate-limited to the configured interval."""
        if not force and now - self._last_metrics_time < self.config.metrics_interval_s:
            return []
        self._last_metrics_time = now
        if len(self.ct_samples) == 0:
            self.live_metrics = None
        else:
            self.live_metrics = analyze_trajectory(self.ct_trajectory(), self.config.threshold)
        return [self._metrics_event()]

    def _metrics_event(self) -> dict:
        m = self.live_metrics
        return {
            "type": "metrics",
            "seq": self._next_seq(),
            "hull_volume_mm3": m.hull_volume_mm3 if m else None,
            "path_length_mm": m.path_length_mm if m else None,
            "outlier_fraction": m.outlier_fraction if m else None,
            "sample_count": self.sample_count,
            "flushed_count": self.flushed_count,
        }

    # -- snapshot / export --------------------------------------------------

    def snapshot(self) -> dict:
        m = self.live_metrics
        return {
            "type": "snapshot",
            "seq": self._seq,
            "session_id": self.session_id,
            "registered": self.registration is not None,
            "fre_mm": self.registration.fre if self.registration else None,
            "matrix": (
                [[float(v) for v in row] for row in self.registration.transform.to_matrix()]
                if self.registration
                else None
            ),
            "anatomy_mode": self.anatomy_mode,
            "ct_pose": [float(v) for v in self.ct_pose] if self.ct_pose is not None else None,
            "trail": [[float(v) for v in p] for p in self.trail],
            "annotations": [a.to_dict() for a in self.annotations.values()],
            "captures": {
                label: {
                    "n_samples": c.n_samples_averaged,
                    "tracker_xyz": [float(v) for v in c.tracker_point],
                }
                for label, c in self.captures.items()
            },
            "slice": self.active_slice,
            "metrics": {
                "hull_volume_mm3": m.hull_volume_mm3 if m else None,
                "path_length_mm": m.path_length_mm if m else None,
                "outlier_fraction": m.outlier_fraction if m else None,
            },
            "sample_count": self.sample_count,
            "flushed_count": self.flushed_count,
        }

    def hello(self) -> dict:
        return {
            "type": "hello",
            "seq": self._seq,
            "session_id": self.session_id,
            "assets": {
                "meshes": {name: f"/assets/{name}.obj" for name in self.meshes},
                "has_volume": self.volume is not None,
                "volume_dims": list(self.volume.dims) if self.volume else None,
            },
            "config": {
                "threshold": self.config.threshold,
                "decimation_mm": self.config.decimation_mm,
                "window": self.config.window,
                "level": self.config.level,
                "capture_window_ms": self.config.capture_window_ms,
            },
        }

    def export(self, now: float | None = None) -> dict:
        """Write everything needed to reproduce the metrics offline.

        Returns the manifest dict (also written as manifest.json).
        """
        self.flush_log()
        now = now if now is not None else time.time()
        files = {"trajectory_raw": "trajectory_raw.csv"}

        if self.ct_samples:
            save_trajectory(self.session_dir / "trajectory_ct.csv", self.ct_trajectory())
            files["trajectory_ct"] = "trajectory_ct.csv"
        if self.registration is not None:
            save_transform(self.session_dir / "registration.txt", self.registration.transform)
            files["registration"] = "registration.txt"
        annotations_payload = [a.to_dict() for a in self.annotations.values()]
        (self.session_dir / "annotations.json").write_text(
            json.dumps(annotations_payload, indent=2) + "\n"
        )
        files["annotations"] = "annotations.json"

        final_metrics = None
        if self.ct_samples:
            report = analyze_trajectory(self.ct_trajectory(), self.config.threshold)
            self.live_metrics = report
            final_metrics = {
                "n_samples": report.n_samples,
                "outlier_fraction": report.outlier_fraction,
                "hull_volume_mm3": report.hull_volume_mm3,
                "path_length_mm": report.path_length_mm,
            }

        manifest = {
            "session_id": self.session_id,
            "threshold": self.config.threshold,
            "decimation_mm": self.config.decimation_mm,
            "anatomy_mode": self.anatomy_mode,
            "counts": {
                "received": self.sample_count,
                "flushed": self.flushed_count,
                "ct_samples": len(self.ct_samples),
                "trail": len(self.trail),
            },
            "registration": {"fre_mm": self.registration.fre} if self.registration else None,
            "metrics": final_metrics,
            "files": files,
        }
        (self.session_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
        return manifest

    def close(self) -> None:
        self.flush_log()
        self._log.close()
