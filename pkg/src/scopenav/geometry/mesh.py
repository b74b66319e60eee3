"""Triangle meshes: OBJ ingestion and point containment queries.

OBJ support is the subset needed for segmented-anatomy exports: ``v`` and
``f`` records, polygon faces fanned into triangles, negative (relative)
indices per the OBJ convention.  Normals, texture coordinates, materials,
and groups are ignored.
"""

import os
from dataclasses import dataclass

import numpy as np

from scopenav._kernels import ray_crossings


class MeshError(Exception):
    pass


@dataclass
class Mesh:
    """Triangle surface; vertices in mm, faces as vertex index triples."""

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64)
        self.faces = np.ascontiguousarray(self.faces, dtype=np.intp)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise MeshError("vertices must have shape (n, 3)")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise MeshError("faces must have shape (m, 3)")
        if len(self.faces) and (self.faces.min() < 0 or self.faces.max() >= len(self.vertices)):
            raise MeshError("face index out of range")

    @property
    def triangles(self) -> np.ndarray:
        """(m, 3, 3) coordinates, contiguous for the kernels."""
        return np.ascontiguousarray(self.vertices[self.faces])

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


def _parse_face_index(token: str, n_vertices: int, where: str) -> int:
    # "i", "i/j", "i//k", "i/j/k"; negative indices count from the end
    idx_str = token.split("/", 1)[0]
    try:
        idx = int(idx_str)
    except ValueError as exc:
        raise MeshError(f"{where}: bad face index {token!r}") from exc
    if idx > 0:
        resolved = idx - 1
    elif idx < 0:
        resolved = n_vertices + idx
    else:
        raise MeshError(f"{where}: OBJ indices are 1-based, got 0")
    if not 0 <= resolved < n_vertices:
        raise MeshError(f"{where}: face index {idx} out of range for {n_vertices} vertices")
    return resolved


def load_obj(path: str | os.PathLike) -> Mesh:
    """Parse an OBJ file into a triangle mesh.

    Polygonal faces are fanned; zero-area triangles are dropped after
    parsing so downstream ray tests never see degenerate faces.
    """
    vertices: list[list[float]] = []
    faces: list[list[int]] = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            where = f"{path}:{lineno}"
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag = parts[0]
            if tag == "v":
                if len(parts) < 4:
                    raise MeshError(f"{where}: vertex needs 3 coordinates")
                try:
                    vertices.append([float(parts[1]), float(parts[2]), float(parts[3])])
                except ValueError as exc:
                    raise MeshError(f"{where}: {exc}") from exc
            elif tag == "f":
                if len(parts) < 4:
                    raise MeshError(f"{where}: face needs at least 3 vertices")
                idx = [_parse_face_index(tok, len(vertices), where) for tok in parts[1:]]
                for k in range(1, len(idx) - 1):
                    faces.append([idx[0], idx[k], idx[k + 1]])
            # vn / vt / g / o / s / usemtl / mtllib intentionally ignored
    if not vertices or not faces:
        raise MeshError(f"{path}: no triangles found")
    mesh = Mesh(np.array(vertices), np.array(faces))
    return _drop_degenerate_faces(mesh)


def _drop_degenerate_faces(mesh: Mesh, area_eps: float = 1e-12) -> Mesh:
    tris = mesh.vertices[mesh.faces]
    cross = np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0])
    area2 = np.linalg.norm(cross, axis=1)
    keep = area2 > area_eps
    if keep.all():
        return mesh
    if not keep.any():
        raise MeshError("all faces are degenerate")
    return Mesh(mesh.vertices, mesh.faces[keep])


def save_obj(path: str | os.PathLike, mesh: Mesh) -> None:
    with open(path, "w") as fh:
        for v in mesh.vertices:
            fh.write(f"v {v[0]} {v[1]} {v[2]}\n")
        for f in mesh.faces:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")


def _random_unit_vector(rng: np.random.Generator) -> np.ndarray:
    while True:
        v = rng.normal(size=3)
        norm = np.linalg.norm(v)
        if norm > 1e-6:
            return v / norm


def point_in_mesh(
    mesh: Mesh,
    point: np.ndarray,
    rng: np.random.Generator | None = None,
    max_retries: int = 64,
) -> bool:
    """Ray-parity containment test for a closed mesh.

    Casts a ray in a random direction and counts crossings; retries with
    a fresh direction whenever a hit is too close to call.  Results on
    non-watertight meshes are undefined.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    point = np.ascontiguousarray(point, dtype=np.float64)
    triangles = mesh.triangles
    for _ in range(max_retries):
        direction = np.ascontiguousarray(_random_unit_vector(rng))
        crossings, degenerate = ray_crossings(triangles, point, direction)
        if not degenerate:
            return crossings % 2 == 1
    raise MeshError(f"no robust ray direction found after {max_retries} retries")


def points_in_mesh(
    mesh: Mesh, points: np.ndarray, rng: np.random.Generator | None = None
) -> np.ndarray:
    """Vectorized convenience wrapper over point_in_mesh."""
    if rng is None:
        rng = np.random.default_rng(0)
    points = np.asarray(points, dtype=np.float64)
    return np.array([point_in_mesh(mesh, p, rng) for p in points], dtype=bool)
