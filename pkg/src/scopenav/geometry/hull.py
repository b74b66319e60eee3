"""3-D convex hulls by incremental insertion, and hull volumes.

The exploration-volume metric is the volume of the convex hull fitted
over a (filtered) trajectory.  Plane-distance tests use an absolute
tolerance of 1e-9 mm; the returned hull is a closed triangle mesh with
outward-oriented faces.
"""

import numpy as np

from scopenav.geometry.mesh import Mesh

PLANE_TOL = 1e-9


class DegenerateInputError(Exception):
    """Fewer than 4 points in general position."""


class OpenMeshError(Exception):
    """Mesh has a boundary edge; volume is undefined."""


def _initial_simplex(points: np.ndarray) -> list[int]:
    # four points in general position: extreme, farthest, widest from the
    # line, widest from the plane
    i0 = int(np.lexsort((points[:, 2], points[:, 1], points[:, 0]))[0])
    d = np.linalg.norm(points - points[i0], axis=1)
    i1 = int(d.argmax())
    if d[i1] <= PLANE_TOL:
        raise DegenerateInputError("all points coincide")

    axis = points[i1] - points[i0]
    axis /= np.linalg.norm(axis)
    rel = points - points[i0]
    perp = rel - np.outer(rel @ axis, axis)
    d2 = np.linalg.norm(perp, axis=1)
    i2 = int(d2.argmax())
    if d2[i2] <= PLANE_TOL:
        raise DegenerateInputError("points are collinear")

    normal = np.cross(points[i1] - points[i0], points[i2] - points[i0])
    normal /= np.linalg.norm(normal)
    d3 = np.abs(rel @ normal)
    i3 = int(d3.argmax())
    if d3[i3] <= PLANE_TOL:
        raise DegenerateInputError("points are coplanar")
    return [i0, i1, i2, i3]


class _HullBuilder:
    """Face soup with cached outward normals; vertices index the input."""

    def __init__(self, points: np.ndarray, simplex: list[int]):
        self.points = points
        self.faces: list[tuple[int, int, int]] = []
        self.normals: list[np.ndarray] = []
        self.offsets: list[float] = []
        a, b, c, d = simplex
        centroid = points[simplex].mean(axis=0)
        for tri in ((a, b, c), (a, c, d), (a, d, b), (b, d, c)):
            self._add_face(tri, centroid)

    def _add_face(self, tri: tuple[int, int, int], inside_point: np.ndarray) -> None:
        p = self.points
        normal = np.cross(p[tri[1]] - p[tri[0]], p[tri[2]] - p[tri[0]])
        norm = np.linalg.norm(normal)
        if norm == 0.0:
            return
        normal /= norm
        offset = float(normal @ p[tri[0]])
        if normal @ inside_point - offset > 0:
            tri = (tri[0], tri[2], tri[1])
            normal = -normal
            offset = -offset
        self.faces.append(tri)
        self.normals.append(normal)
        self.offsets.append(offset)

    def insert(self, idx: int) -> None:
        p = self.points[idx]
        normals = np.array(self.normals)
        offsets = np.array(self.offsets)
        visible = normals @ p - offsets > PLANE_TOL
        if not visible.any():
            return

        # horizon: directed edges of visible faces whose twin face survives
        visible_edges: set[tuple[int, int]] = set()
        for fi in np.flatnonzero(visible):
            a, b, c = self.faces[fi]
            visible_edges.update([(a, b), (b, c), (c, a)])
        horizon = [(a, b) for (a, b) in visible_edges if (b, a) not in visible_edges]

        keep = [i for i in range(len(self.faces)) if not visible[i]]
        self.faces = [self.faces[i] for i in keep]
        self.normals = [self.normals[i] for i in keep]
        self.offsets = [self.offsets[i] for i in keep]

        interior = self.points[np.array([f[0] for f in self.faces])].mean(axis=0) if self.faces else None
        for a, b in horizon:
            self._add_face_outward((a, b, idx), interior)

    def _add_face_outward(self, tri: tuple[int, int, int], interior: np.ndarray | None) -> None:
        # horizon edges carry the old winding, so (a, b, new) is already
        # outward for a convex solid; interior check guards numeric slips
        p = self.points
        normal = np.cross(p[tri[1]] - p[tri[0]], p[tri[2]] - p[tri[0]])
        norm = np.linalg.norm(normal)
        if norm == 0.0:
            return
        normal /= norm
        offset = float(normal @ p[tri[0]])
        if interior is not None and normal @ interior - offset > PLANE_TOL:
            tri = (tri[0], tri[2], tri[1])
            normal = -normal
            offset = -offset
        self.faces.append(tri)
        self.normals.append(normal)
        self.offsets.append(offset)


def convex_hull(points: np.ndarray) -> Mesh:
    """Convex hull of >= 4 non-coplanar points as a closed triangle mesh.

    Duplicate and interior points do not appear among the hull vertices.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 3:
        raise DegenerateInputError("points must have shape (n, 3)")
    if len(points) < 4:
        raise DegenerateInputError(f"need at least 4 points, got {len(points)}")
    if not np.isfinite(points).all():
        raise DegenerateInputError("non-finite coordinates")

    simplex = _initial_simplex(points)
    builder = _HullBuilder(points, simplex)
    order = np.argsort(-np.linalg.norm(points - points.mean(axis=0), axis=1))
    chosen = set(simplex)
    for idx in order:
        if int(idx) in chosen:
            continue
        builder.insert(int(idx))

    used = sorted({v for tri in builder.faces for v in tri})
    remap = {v: i for i, v in enumerate(used)}
    faces = np.array([[remap[a], remap[b], remap[c]] for a, b, c in builder.faces])
    return Mesh(points[used], faces)


def _boundary_edges(faces: np.ndarray) -> int:
    counts: dict[tuple[int, int], int] = {}
    for a, b, c in faces:
        for e in ((a, b), (b, c), (c, a)):
            counts[e] = counts.get(e, 0) + 1
    boundary = 0
    for (a, b), n in counts.items():
        if n != 1 or counts.get((b, a), 0) != 1:
            boundary += 1
    return boundary


def hull_volume(mesh: Mesh) -> float:
    """Enclosed volume of a closed, consistently oriented triangle mesh.

    Signed tetrahedra against the origin (divergence theorem); the
    absolute value is returned so either orientation convention works.
    """
    if _boundary_edges(mesh.faces) > 0:
        raise OpenMeshError("mesh has boundary or inconsistently wound edges")
    tris = mesh.vertices[mesh.faces]
    signed = np.einsum("ij,ij->i", tris[:, 0], np.cross(tris[:, 1], tris[:, 2]))
    return float(abs(signed.sum()) / 6.0)
