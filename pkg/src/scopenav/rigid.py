"""Rigid tracker-space -> CT-space registration from paired fiducials.

The solver is the SVD least-squares fit (covariance of centered point
sets, reflection corrected so det(R) = +1).  File formats:

  fiducial pairs: CSV, one row per pair: label, tx, ty, tz, cx, cy, cz (mm)
  transform:      4 lines of 4 space-separated values (homogeneous matrix)
"""

import os
from dataclasses import dataclass, field

import numpy as np


class RegistrationError(Exception):
    pass


class DegenerateConfigurationError(RegistrationError):
    """Fiducial geometry does not pin down a unique rigid motion."""


@dataclass
class FiducialPair:
    label: str
    tracker_point: np.ndarray
    ct_point: np.ndarray

    def __post_init__(self):
        self.tracker_point = np.asarray(self.tracker_point, dtype=np.float64)
        self.ct_point = np.asarray(self.ct_point, dtype=np.float64)
        if self.tracker_point.shape != (3,) or self.ct_point.shape != (3,):
            raise ValueError("fiducial points must be 3-vectors")
        if not (np.isfinite(self.tracker_point).all() and np.isfinite(self.ct_point).all()):
            raise ValueError(f"non-finite coordinates in fiducial {self.label!r}")


@dataclass
class RigidTransform:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64)
        self.translation = np.asarray(self.translation, dtype=np.float64)
        if self.rotation.shape != (3, 3) or self.translation.shape != (3,):
            raise ValueError("rigid transform needs 3x3 rotation and 3-vector translation")
        if not np.allclose(self.rotation.T @ self.rotation, np.eye(3), atol=1e-9):
            raise ValueError("rotation is not orthonormal within 1e-9")
        if abs(np.linalg.det(self.rotation) - 1.0) > 1e-9:
            raise ValueError("rotation determinant is not +1 within 1e-9")

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    def apply(self, point: np.ndarray) -> np.ndarray:
        """R @ p + t; accepts a single point or an (n, 3) array."""
        p = np.asarray(point, dtype=np.float64)
        return p @ self.rotation.T + self.translation

    def invert(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self after other: (self * other)(p) = self(other(p))."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def to_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "RigidTransform":
        m = np.asarray(m, dtype=np.float64)
        if m.shape != (4, 4):
            raise ValueError("expected a 4x4 homogeneous matrix")
        return cls(m[:3, :3], m[:3, 3])


@dataclass
class RegistrationResult:
    transform: RigidTransform
    fre: float
    per_point_residuals: list[float] = field(default_factory=list)


def solve_rigid(pairs: list[FiducialPair]) -> RegistrationResult:
    """Least-squares rigid fit minimizing sum ||R p_i + t - q_i||^2.

    Requires >= 3 pairs with non-collinear tracker points.  The returned
    rotation is always proper (det +1): the smallest singular direction
    is flipped when the plain SVD solution would be a reflection.
    """
    if len(pairs) < 3:
        raise RegistrationError(f"need at least 3 fiducial pairs, got {len(pairs)}")
    labels = [p.label for p in pairs]
    if len(set(labels)) != len(labels):
        raise RegistrationError("fiducial labels must be unique")

    p = np.array([pair.tracker_point for pair in pairs])
    q = np.array([pair.ct_point for pair in pairs])

    p_mean = p.mean(axis=0)
    q_mean = q.mean(axis=0)
    p_c = p - p_mean
    q_c = q - q_mean

    if np.linalg.matrix_rank(p_c, tol=1e-9 * max(1.0, np.abs(p_c).max())) < 2:
        raise DegenerateConfigurationError(
            "tracker fiducials are collinear or coincident; rotation is ambiguous"
        )

    h = p_c.T @ q_c
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    rotation = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    translation = q_mean - rotation @ p_mean

    transform = RigidTransform(rotation, translation)
    residuals = np.linalg.norm(transform.apply(p) - q, axis=1)
    fre = float(np.sqrt(np.mean(residuals**2)))
    return RegistrationResult(transform, fre, residuals.tolist())


def quaternion_to_rotation(q: np.ndarray) -> np.ndarray:
    """Unit quaternion (w, x, y, z) to a 3x3 rotation matrix."""
    q = np.asarray(q, dtype=np.float64)
    norm = np.linalg.norm(q)
    if norm == 0:
        raise ValueError("zero quaternion")
    w, x, y, z = q / norm
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def rotation_to_quaternion(r: np.ndarray) -> np.ndarray:
    """3x3 rotation matrix to a unit quaternion (w, x, y, z), w >= 0."""
    r = np.asarray(r, dtype=np.float64)
    trace = np.trace(r)
    if trace > 0:
        s = np.sqrt(trace + 1.0) * 2
        q = np.array(
            [0.25 * s, (r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s]
        )
    else:
        i = int(np.argmax([r[0, 0], r[1, 1], r[2, 2]]))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(max(r[i, i] - r[j, j] - r[k, k] + 1.0, 0.0)) * 2
        q = np.empty(4)
        q[0] = (r[k, j] - r[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (r[j, i] + r[i, j]) / s
        q[1 + k] = (r[k, i] + r[i, k]) / s
    if q[0] < 0:
        q = -q
    return q / np.linalg.norm(q)


# ---------------------------------------------------------------------------
# file I/O


def load_fiducial_pairs(path: str | os.PathLike) -> list[FiducialPair]:
    pairs = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 7:
                raise RegistrationError(
                    f"{path}:{lineno}: expected 'label, tx, ty, tz, cx, cy, cz', got {len(parts)} fields"
                )
            try:
                values = [float(v) for v in parts[1:]]
            except ValueError as exc:
                raise RegistrationError(f"{path}:{lineno}: {exc}") from exc
            pairs.append(FiducialPair(parts[0], values[:3], values[3:]))
    if not pairs:
        raise RegistrationError(f"{path}: no fiducial pairs found")
    return pairs


def save_transform(path: str | os.PathLike, transform: RigidTransform) -> None:
    m = transform.to_matrix()
    with open(path, "w") as fh:
        for row in m:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_transform(path: str | os.PathLike) -> RigidTransform:
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rows.append([float(v) for v in line.split()])
    m = np.array(rows)
    if m.shape != (4, 4):
        raise RegistrationError(f"{path}: expected 4 rows of 4 values, got shape {m.shape}")
    return RigidTransform.from_matrix(m)
