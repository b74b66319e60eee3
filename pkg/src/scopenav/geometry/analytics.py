"""Per-trajectory analytics record: filter, hull volume, traveled distance."""

from dataclasses import dataclass

from scopenav.geometry.hull import DegenerateInputError, convex_hull, hull_volume
from scopenav.geometry.outliers import mahalanobis_filter
from scopenav.geometry.trajectory import Trajectory, TrajectoryError, path_length


def pct_change(baseline: float, treatment: float) -> float:
    """100 * (treatment - baseline) / baseline."""
    if baseline == 0:
        raise ValueError("baseline must be nonzero")
    return 100.0 * (treatment - baseline) / baseline


@dataclass
class TrajectoryReport:
    n_samples: int
    outlier_fraction: float | None
    hull_volume_mm3: float | None
    path_length_mm: float | None
    note: str = ""


def analyze_trajectory(trajectory: Trajectory, threshold: float = 3.0) -> TrajectoryReport:
    """Outlier removal first, then hull volume and path length on inliers.

    Degenerate inputs (too few samples for a metric, coplanar hulls)
    produce absent values with a note rather than an error.
    """
    n = len(trajectory)
    notes = []
    try:
        report = mahalanobis_filter(trajectory, threshold)
        inliers = report.inliers
        outlier_fraction = report.outlier_fraction
    except Exception as exc:
        notes.append(f"filter skipped: {exc}")
        inliers = trajectory
        outlier_fraction = None

    volume = None
    try:
        volume = hull_volume(convex_hull(inliers.positions))
    except DegenerateInputError as exc:
        notes.append(f"hull unavailable: {exc}")

    length = None
    try:
        length = path_length(inliers)
    except TrajectoryError as exc:
        notes.append(f"length unavailable: {exc}")

    return TrajectoryReport(
        n_samples=n,
        outlier_fraction=outlier_fraction,
        hull_volume_mm3=volume,
        path_length_mm=length,
        note="; ".join(notes),
    )
