# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot-loop kernels: CRC-64, ray/triangle parity, trilinear sampling.

API mirrors ``_pure.py``; selection happens in the package __init__.
"""

import numpy as np

cimport cython
cimport numpy as cnp
from libc.math cimport fabs, floor, sqrt
from libc.stdint cimport int64_t, uint8_t, uint64_t

cnp.import_array()

BACKEND = "native"

cdef uint64_t CRC64_POLY = 0x42F0E1EBA9EA3693ULL

cdef uint64_t[256] _CRC_TABLE

cdef void _build_crc_table() noexcept:
    cdef uint64_t crc
    cdef int byte, bit
    for byte in range(256):
        crc = (<uint64_t>byte) << 56
        for bit in range(8):
            if crc & 0x8000000000000000ULL:
                crc = (crc << 1) ^ CRC64_POLY
            else:
                crc = crc << 1
        _CRC_TABLE[byte] = crc

_build_crc_table()


def crc64(const uint8_t[::1] data, uint64_t crc=0):
    """CRC-64, polynomial 0x42F0E1EBA9EA3693, init 0, unreflected, no xor-out."""
    cdef Py_ssize_t i, n = data.shape[0]
    for i in range(n):
        crc = (crc << 8) ^ _CRC_TABLE[((crc >> 56) ^ data[i]) & 0xFF]
    return crc


def ray_crossings(double[:, :, ::1] triangles, double[::1] origin,
                  double[::1] direction, double eps=1e-9):
    """Count ray/triangle crossings for a parity test.

    Returns (crossings, degenerate); see the fallback docstring for the
    degeneracy contract.
    """
    cdef Py_ssize_t m = triangles.shape[0], i
    cdef double ox = origin[0], oy = origin[1], oz = origin[2]
    cdef double dx = direction[0], dy = direction[1], dz = direction[2]
    cdef double e1x, e1y, e1z, e2x, e2y, e2z
    cdef double hx, hy, hz, sx, sy, sz, qx, qy, qz
    cdef double nx, ny, nz, n_norm, a, f, u, v, w, t, plane_dist
    cdef int crossings = 0

    for i in range(m):
        e1x = triangles[i, 1, 0] - triangles[i, 0, 0]
        e1y = triangles[i, 1, 1] - triangles[i, 0, 1]
        e1z = triangles[i, 1, 2] - triangles[i, 0, 2]
        e2x = triangles[i, 2, 0] - triangles[i, 0, 0]
        e2y = triangles[i, 2, 1] - triangles[i, 0, 1]
        e2z = triangles[i, 2, 2] - triangles[i, 0, 2]

        hx = dy * e2z - dz * e2y
        hy = dz * e2x - dx * e2z
        hz = dx * e2y - dy * e2x
        a = e1x * hx + e1y * hy + e1z * hz

        nx = e1y * e2z - e1z * e2y
        ny = e1z * e2x - e1x * e2z
        nz = e1x * e2y - e1y * e2x
        n_norm = sqrt(nx * nx + ny * ny + nz * nz)
        if n_norm == 0.0:
            n_norm = 1.0

        sx = ox - triangles[i, 0, 0]
        sy = oy - triangles[i, 0, 1]
        sz = oz - triangles[i, 0, 2]

        if fabs(a) / n_norm < eps:
            plane_dist = fabs(sx * nx + sy * ny + sz * nz) / n_norm
            if plane_dist < eps:
                return 0, True
            continue

        f = 1.0 / a
        u = f * (sx * hx + sy * hy + sz * hz)
        qx = sy * e1z - sz * e1y
        qy = sz * e1x - sx * e1z
        qz = sx * e1y - sy * e1x
        v = f * (dx * qx + dy * qy + dz * qz)
        t = f * (e2x * qx + e2y * qy + e2z * qz)
        w = 1.0 - u - v

        if u > -eps and v > -eps and w > -eps and t > -eps:
            if u < eps or v < eps or w < eps or t < eps:
                return 0, True
            crossings += 1
    return crossings, False


ctypedef fused voxel_t:
    uint8_t
    cnp.int16_t
    cnp.uint16_t
    cnp.float32_t
    cnp.float64_t


@cython.boundscheck(False)
def _trilinear_impl(voxel_t[:, :, ::1] data, double[:, ::1] coords, double fill,
                    double[::1] out):
    cdef Py_ssize_t n = coords.shape[0], idx
    cdef Py_ssize_t d0 = data.shape[0], d1 = data.shape[1], d2 = data.shape[2]
    cdef Py_ssize_t i0, j0, k0, i1, j1, k1
    cdef double x, y, z, fx, fy, fz
    cdef double c00, c10, c01, c11, c0, c1

    for idx in range(n):
        x = coords[idx, 0]
        y = coords[idx, 1]
        z = coords[idx, 2]
        if x < 0.0 or x > d0 - 1 or y < 0.0 or y > d1 - 1 or z < 0.0 or z > d2 - 1:
            out[idx] = fill
            continue
        i0 = <Py_ssize_t>floor(x)
        j0 = <Py_ssize_t>floor(y)
        k0 = <Py_ssize_t>floor(z)
        if i0 > d0 - 2:
            i0 = d0 - 2
        if i0 < 0:
            i0 = 0
        if j0 > d1 - 2:
            j0 = d1 - 2
        if j0 < 0:
            j0 = 0
        if k0 > d2 - 2:
            k0 = d2 - 2
        if k0 < 0:
            k0 = 0
        i1 = i0 + 1 if i0 + 1 < d0 else d0 - 1
        j1 = j0 + 1 if j0 + 1 < d1 else d1 - 1
        k1 = k0 + 1 if k0 + 1 < d2 else d2 - 1
        fx = x - i0
        fy = y - j0
        fz = z - k0

        c00 = data[i0, j0, k0] * (1 - fx) + data[i1, j0, k0] * fx
        c10 = data[i0, j1, k0] * (1 - fx) + data[i1, j1, k0] * fx
        c01 = data[i0, j0, k1] * (1 - fx) + data[i1, j0, k1] * fx
        c11 = data[i0, j1, k1] * (1 - fx) + data[i1, j1, k1] * fx
        c0 = c00 * (1 - fy) + c10 * fy
        c1 = c01 * (1 - fy) + c11 * fy
        out[idx] = c0 * (1 - fz) + c1 * fz


def trilinear_sample(data, coords, double fill):
    """Trilinear interpolation at fractional voxel coordinates (see fallback)."""
    coords = np.ascontiguousarray(coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != 3:
        raise ValueError("coords must have shape (n, 3)")
    data = np.ascontiguousarray(data)
    if data.dtype not in (np.uint8, np.int16, np.uint16, np.float32, np.float64):
        raise TypeError(f"unsupported voxel dtype {data.dtype}")
    out = np.empty(coords.shape[0], dtype=np.float64)
    _trilinear_impl(data, coords, fill, out)
    return out
