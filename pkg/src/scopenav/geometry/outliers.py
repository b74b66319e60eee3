"""Mahalanobis-distance outlier removal for recorded trajectories.

A single global pass: mean and sample covariance over all positions,
then d(x) = sqrt((x - mu)^T Sigma^-1 (x - mu)); samples with d above the
threshold (default 3.0) are discarded.  Scope retraction leaves stray
points far from the explored cavity, which is what this removes before
hull and distance metrics.
"""

from dataclasses import dataclass

import numpy as np

from scopenav.geometry.trajectory import Trajectory

COND_LIMIT = 1e12


class OutlierError(Exception):
    pass


@dataclass
class OutlierReport:
    inliers: Trajectory
    outlier_indices: list[int]
    outlier_fraction: float
    threshold: float


def mahalanobis_distances(positions: np.ndarray) -> np.ndarray:
    """Distances of each row from the sample mean, covariance-normalized.

    The covariance is regularized by eps*I with eps = 1e-9 * trace/3 when
    its condition number exceeds 1e12 (near-coplanar trajectories).
    """
    positions = np.asarray(positions, dtype=np.float64)
    n = len(positions)
    if n < 4:
        raise OutlierError(f"need at least 4 samples, got {n}")
    mu = positions.mean(axis=0)
    centered = positions - mu
    cov = centered.T @ centered / (n - 1)

    trace = float(np.trace(cov))
    if trace <= 0.0:
        raise OutlierError("zero-variance trajectory; distances undefined")
    if np.linalg.cond(cov) > COND_LIMIT:
        cov = cov + (1e-9 * trace / 3.0) * np.eye(3)

    try:
        inv = np.linalg.inv(cov)
    except np.linalg.LinAlgError as exc:
        raise OutlierError("covariance not invertible after regularization") from exc
    d2 = np.einsum("ij,jk,ik->i", centered, inv, centered)
    return np.sqrt(np.maximum(d2, 0.0))


def mahalanobis_filter(trajectory: Trajectory, threshold: float = 3.0) -> OutlierReport:
    distances = mahalanobis_distances(trajectory.positions)
    outlier_mask = distances > threshold
    outlier_indices = np.flatnonzero(outlier_mask)
    inliers = trajectory.subset(np.flatnonzero(~outlier_mask))
    return OutlierReport(
        inliers=inliers,
        outlier_indices=outlier_indices.tolist(),
        outlier_fraction=len(outlier_indices) / len(distances),
        threshold=threshold,
    )
