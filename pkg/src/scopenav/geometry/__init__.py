"""Meshes, convex hulls, trajectories, and trajectory analytics."""

from scopenav.geometry.mesh import Mesh, MeshError, load_obj, point_in_mesh, save_obj
from scopenav.geometry.hull import DegenerateInputError, OpenMeshError, convex_hull, hull_volume
from scopenav.geometry.outliers import OutlierReport, mahalanobis_filter
from scopenav.geometry.trajectory import (
    TrackedSample,
    Trajectory,
    TrajectoryError,
    load_trajectory,
    path_length,
    save_trajectory,
)
from scopenav.geometry.analytics import TrajectoryReport, analyze_trajectory, pct_change

__all__ = [
    "DegenerateInputError",
    "Mesh",
    "MeshError",
    "OpenMeshError",
    "OutlierReport",
    "TrackedSample",
    "Trajectory",
    "TrajectoryError",
    "TrajectoryReport",
    "analyze_trajectory",
    "convex_hull",
    "hull_volume",
    "load_obj",
    "load_trajectory",
    "mahalanobis_filter",
    "path_length",
    "pct_change",
    "point_in_mesh",
    "save_obj",
    "save_trajectory",
]
