"""Timestamped scope-tip trajectories and their file format.

CSV with a header row: t_seconds, x_mm, y_mm, z_mm and optional
quaternion columns qw, qx, qy, qz.  Floats are written with repr so a
load/save cycle is bit-exact, which the offline/online metric equality
depends on.
"""

import os
from dataclasses import dataclass, field

import numpy as np


class TrajectoryError(Exception):
    pass


@dataclass
class TrackedSample:
    timestamp: float
    position: np.ndarray
    orientation: np.ndarray | None = None  # unit quaternion (w, x, y, z)

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64)
        if self.position.shape != (3,):
            raise TrajectoryError("position must be a 3-vector")
        if self.orientation is not None:
            self.orientation = np.asarray(self.orientation, dtype=np.float64)
            if self.orientation.shape != (4,):
                raise TrajectoryError("orientation must be a quaternion (w, x, y, z)")
            norm = np.linalg.norm(self.orientation)
            if abs(norm - 1.0) > 1e-6:
                raise TrajectoryError(f"quaternion norm {norm} not unit within 1e-6")


@dataclass
class Trajectory:
    samples: list[TrackedSample] = field(default_factory=list)
    frame: str = "tracker"  # "tracker" or "ct"

    def __post_init__(self):
        if self.frame not in ("tracker", "ct"):
            raise TrajectoryError(f"unknown frame {self.frame!r}")
        times = [s.timestamp for s in self.samples]
        if any(b < a for a, b in zip(times, times[1:])):
            raise TrajectoryError("timestamps must be non-decreasing")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def positions(self) -> np.ndarray:
        if not self.samples:
            return np.empty((0, 3))
        return np.array([s.position for s in self.samples])

    @property
    def timestamps(self) -> np.ndarray:
        return np.array([s.timestamp for s in self.samples])

    def subset(self, indices) -> "Trajectory":
        return Trajectory([self.samples[int(i)] for i in indices], frame=self.frame)


def path_length(trajectory: Trajectory) -> float:
    """Sum of straight-line gaps between consecutive samples, in mm."""
    if len(trajectory) < 2:
        raise TrajectoryError(f"need at least 2 samples, got {len(trajectory)}")
    positions = trajectory.positions
    return float(np.linalg.norm(np.diff(positions, axis=0), axis=1).sum())


_BASE_COLUMNS = ["t_seconds", "x_mm", "y_mm", "z_mm"]
_QUAT_COLUMNS = ["qw", "qx", "qy", "qz"]


def save_trajectory(path: str | os.PathLike, trajectory: Trajectory) -> None:
    with_quat = any(s.orientation is not None for s in trajectory.samples)
    columns = _BASE_COLUMNS + (_QUAT_COLUMNS if with_quat else [])
    with open(path, "w") as fh:
        fh.write(",".join(columns) + "\n")
        for s in trajectory.samples:
            fields = [repr(float(s.timestamp))] + [repr(float(v)) for v in s.position]
            if with_quat:
                quat = s.orientation if s.orientation is not None else np.array([1.0, 0, 0, 0])
                fields += [repr(float(v)) for v in quat]
            fh.write(",".join(fields) + "\n")


def load_trajectory(path: str | os.PathLike, frame: str = "tracker") -> Trajectory:
    with open(path) as fh:
        header = fh.readline()
        if not header:
            raise TrajectoryError(f"{path}: empty file")
        columns = [c.strip() for c in header.strip().split(",")]
        if columns[:4] != _BASE_COLUMNS:
            raise TrajectoryError(
                f"{path}: header must start with {','.join(_BASE_COLUMNS)}, got {header.strip()!r}"
            )
        has_quat = columns[4:8] == _QUAT_COLUMNS
        if columns[4:] and not has_quat:
            raise TrajectoryError(f"{path}: unrecognized extra columns {columns[4:]}")
        samples = []
        for lineno, line in enumerate(fh, 2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            expected = 8 if has_quat else 4
            if len(parts) != expected:
                raise TrajectoryError(f"{path}:{lineno}: expected {expected} fields, got {len(parts)}")
            try:
                values = [float(v) for v in parts]
            except ValueError as exc:
                raise TrajectoryError(f"{path}:{lineno}: {exc}") from exc
            orientation = np.array(values[4:8]) if has_quat else None
            samples.append(TrackedSample(values[0], np.array(values[1:4]), orientation))
    if not samples:
        raise TrajectoryError(f"{path}: no samples")
    return Trajectory(samples, frame=frame)
