"""Shared geometry fixtures: unit cube, icosphere, tube-like phantom mesh."""

import numpy as np
import pytest

from scopenav.geometry.mesh import Mesh

CUBE_VERTICES = np.array(
    [
        [0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0],
        [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1],
    ],
    dtype=np.float64,
)

# outward-wound triangles, two per cube face
CUBE_FACES = np.array(
    [
        [0, 2, 1], [0, 3, 2],  # bottom (z=0)
        [4, 5, 6], [4, 6, 7],  # top (z=1)
        [0, 1, 5], [0, 5, 4],  # front (y=0)
        [2, 3, 7], [2, 7, 6],  # back (y=1)
        [0, 4, 7], [0, 7, 3],  # left (x=0)
        [1, 2, 6], [1, 6, 5],  # right (x=1)
    ]
)


def make_cube(origin=(0.0, 0.0, 0.0), size=1.0) -> Mesh:
    return Mesh(CUBE_VERTICES * size + np.asarray(origin, dtype=np.float64), CUBE_FACES.copy())


def make_icosphere(radius=1.0, center=(0.0, 0.0, 0.0), subdivisions=2) -> Mesh:
    """Subdivided icosahedron with outward-oriented faces."""
    phi = (1 + np.sqrt(5)) / 2
    verts = np.array(
        [
            [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
            [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
            [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
        ],
        dtype=np.float64,
    )
    verts /= np.linalg.norm(verts, axis=1)[:, None]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = list(verts)
    cache: dict[tuple[int, int], int] = {}

    def midpoint(a: int, b: int) -> int:
        key = (min(a, b), max(a, b))
        if key not in cache:
            m = verts[a] + verts[b]
            m /= np.linalg.norm(m)
            cache[key] = len(verts)
            verts.append(m)
        return cache[key]

    for _ in range(subdivisions):
        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces

    vertices = np.array(verts) * radius + np.asarray(center, dtype=np.float64)
    return Mesh(vertices, np.array(faces))


def make_tube_phantom() -> Mesh:
    """Branching-cavity stand-in: an elongated ellipsoid, collecting-system scale."""
    sphere = make_icosphere(radius=1.0, subdivisions=2)
    scale = np.array([18.0, 30.0, 14.0])
    return Mesh(sphere.vertices * scale, sphere.faces)


@pytest.fixture
def cube_mesh():
    return make_cube()


@pytest.fixture
def sphere_mesh():
    return make_icosphere(radius=10.0, subdivisions=3)


@pytest.fixture
def phantom_mesh():
    return make_tube_phantom()
