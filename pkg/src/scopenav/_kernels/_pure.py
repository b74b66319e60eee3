"""Pure numpy implementations of the hot kernels.

Same API as the compiled extension in ``_native.pyx``; used when the
extension is unavailable or when SCOPENAV_PURE=1 is set.
"""

import numpy as np

BACKEND = "pure"

CRC64_POLY = 0x42F0E1EBA9EA3693
_CRC_MASK = (1 << 64) - 1


def _build_crc_table() -> list[int]:
    table = []
    for byte in range(256):
        crc = byte << 56
        for _ in range(8):
            if crc & (1 << 63):
                crc = ((crc << 1) ^ CRC64_POLY) & _CRC_MASK
            else:
                crc = (crc << 1) & _CRC_MASK
        table.append(crc)
    return table


_CRC_TABLE = _build_crc_table()


def crc64(data: bytes, crc: int = 0) -> int:
    """CRC-64, polynomial 0x42F0E1EBA9EA3693, init 0, unreflected, no xor-out."""
    for byte in data:
        crc = ((crc << 8) & _CRC_MASK) ^ _CRC_TABLE[((crc >> 56) ^ byte) & 0xFF]
    return crc


def ray_crossings(triangles: np.ndarray, origin: np.ndarray, direction: np.ndarray,
                  eps: float = 1e-9) -> tuple[int, bool]:
    """Count ray/triangle crossings for a parity test.

    triangles: (m, 3, 3) float64 vertex coordinates.
    Returns (crossings, degenerate). ``degenerate`` is True when any
    candidate hit is too close to call (ray nearly parallel to a face it
    passes near, hit within eps of an edge, or origin within eps of a
    face); the caller should retry with a fresh direction.
    """
    origin = np.asarray(origin, dtype=np.float64)
    direction = np.asarray(direction, dtype=np.float64)
    v0 = triangles[:, 0]
    e1 = triangles[:, 1] - v0
    e2 = triangles[:, 2] - v0

    h = np.cross(direction, e2)
    a = np.einsum("ij,ij->i", e1, h)
    n = np.cross(e1, e2)
    n_norm = np.linalg.norm(n, axis=1)
    n_norm = np.where(n_norm == 0.0, 1.0, n_norm)

    # ray parallel to a face plane: only a problem if the origin lies in
    # (or within eps of) that plane, otherwise the face cannot be crossed
    parallel = np.abs(a) / n_norm < eps
    if parallel.any():
        plane_dist = np.abs(np.einsum("ij,ij->i", origin - v0, n)) / n_norm
        if (parallel & (plane_dist < eps)).any():
            return 0, True

    live = ~parallel
    if not live.any():
        return 0, False

    f = np.zeros(len(a))
    f[live] = 1.0 / a[live]
    s = origin - v0
    u = f * np.einsum("ij,ij->i", s, h)
    q = np.cross(s, e1)
    v = f * (q @ direction)
    t = f * np.einsum("ij,ij->i", e2, q)
    w = 1.0 - u - v

    candidate = live & (u > -eps) & (v > -eps) & (w > -eps) & (t > -eps)
    if not candidate.any():
        return 0, False
    near_edge = (u < eps) | (v < eps) | (w < eps) | (t < eps)
    if (candidate & near_edge).any():
        return 0, True
    return int(candidate.sum()), False


def trilinear_sample(data: np.ndarray, coords: np.ndarray, fill: float) -> np.ndarray:
    """Trilinear interpolation at fractional voxel coordinates.

    data: (d0, d1, d2) scalar array; coords: (n, 3) float64 in index
    space (voxel centers at integer coordinates). Points outside
    [0, dim-1] on any axis take ``fill``.
    """
    coords = np.asarray(coords, dtype=np.float64)
    d0, d1, d2 = data.shape
    x, y, z = coords[:, 0], coords[:, 1], coords[:, 2]
    inside = (
        (x >= 0.0) & (x <= d0 - 1) &
        (y >= 0.0) & (y <= d1 - 1) &
        (z >= 0.0) & (z <= d2 - 1)
    )
    out = np.full(len(coords), float(fill), dtype=np.float64)
    if not inside.any():
        return out

    xs, ys, zs = x[inside], y[inside], z[inside]
    i0 = np.clip(np.floor(xs).astype(np.intp), 0, max(d0 - 2, 0))
    j0 = np.clip(np.floor(ys).astype(np.intp), 0, max(d1 - 2, 0))
    k0 = np.clip(np.floor(zs).astype(np.intp), 0, max(d2 - 2, 0))
    i1 = np.minimum(i0 + 1, d0 - 1)
    j1 = np.minimum(j0 + 1, d1 - 1)
    k1 = np.minimum(k0 + 1, d2 - 1)
    fx = xs - i0
    fy = ys - j0
    fz = zs - k0

    d = data.astype(np.float64, copy=False)
    c000 = d[i0, j0, k0]
    c100 = d[i1, j0, k0]
    c010 = d[i0, j1, k0]
    c110 = d[i1, j1, k0]
    c001 = d[i0, j0, k1]
    c101 = d[i1, j0, k1]
    c011 = d[i0, j1, k1]
    c111 = d[i1, j1, k1]

    c00 = c000 * (1 - fx) + c100 * fx
    c10 = c010 * (1 - fx) + c110 * fx
    c01 = c001 * (1 - fx) + c101 * fx
    c11 = c011 * (1 - fx) + c111 * fx
    c0 = c00 * (1 - fy) + c10 * fy
    c1 = c01 * (1 - fy) + c11 * fy
    out[inside] = c0 * (1 - fz) + c1 * fz
    return out
