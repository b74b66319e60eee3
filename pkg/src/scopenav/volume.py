"""CT volumes: NRRD (raw-encoded, attached header) loading and 2-D slicing.

Supported NRRD subset: 3-dimensional scalar volumes, ``encoding: raw``,
types uint8 / int16 / uint16 / float32, axis-aligned ``space directions``.
Values are byte-swapped to native order on load.  Out-of-volume samples
take the minimum of the voxel type's range (reads as air in CT).
"""

import io
import os
import re
from dataclasses import dataclass

import numpy as np
from PIL import Image

from scopenav._kernels import trilinear_sample


class VolumeError(Exception):
    pass


_NRRD_TYPES = {
    "uchar": np.uint8, "unsigned char": np.uint8, "uint8": np.uint8, "uint8_t": np.uint8,
    "short": np.int16, "short int": np.int16, "signed short": np.int16,
    "int16": np.int16, "int16_t": np.int16,
    "ushort": np.uint16, "unsigned short": np.uint16, "uint16": np.uint16, "uint16_t": np.uint16,
    "float": np.float32, "float32": np.float32,
}

_TYPE_NAMES = {np.uint8: "uint8", np.int16: "int16", np.uint16: "uint16", np.float32: "float"}


def type_minimum(dtype) -> float:
    dtype = np.dtype(dtype)
    if dtype.kind == "f":
        return float(np.finfo(dtype).min)
    return float(np.iinfo(dtype).min)


@dataclass
class Volume:
    """3-D scalar image; data indexed [i, j, k] with i the fastest wire axis."""

    data: np.ndarray
    spacing: np.ndarray
    origin: np.ndarray

    def __post_init__(self):
        self.spacing = np.asarray(self.spacing, dtype=np.float64)
        self.origin = np.asarray(self.origin, dtype=np.float64)
        if self.data.ndim != 3:
            raise VolumeError("volume data must be 3-D")
        if (self.spacing <= 0).any():
            raise VolumeError("spacing must be positive")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    def voxel_to_world(self, ijk: np.ndarray) -> np.ndarray:
        return self.origin + np.asarray(ijk, dtype=np.float64) * self.spacing

    def world_to_voxel(self, xyz: np.ndarray) -> np.ndarray:
        return (np.asarray(xyz, dtype=np.float64) - self.origin) / self.spacing


@dataclass
class SliceImage:
    width: int
    height: int
    pixel_spacing: np.ndarray
    origin: np.ndarray
    basis: np.ndarray  # (2, 3) orthonormal rows spanning the plane
    data: np.ndarray   # (height, width)

    def __post_init__(self):
        self.pixel_spacing = np.asarray(self.pixel_spacing, dtype=np.float64)
        self.origin = np.asarray(self.origin, dtype=np.float64)
        self.basis = np.asarray(self.basis, dtype=np.float64)
        if self.basis.shape != (2, 3):
            raise VolumeError("basis must be two 3-vectors")
        gram = self.basis @ self.basis.T
        if not np.allclose(gram, np.eye(2), atol=1e-9):
            raise VolumeError("basis vectors must be orthonormal within 1e-9")
        if self.data.shape != (self.height, self.width):
            raise VolumeError("data shape must be (height, width)")


def _parse_vector(text: str) -> np.ndarray:
    text = text.strip()
    if not (text.startswith("(") and text.endswith(")")):
        raise VolumeError(f"expected a (x,y,z) vector, got {text!r}")
    return np.array([float(v) for v in text[1:-1].split(",")])


def _parse_space_directions(text: str) -> np.ndarray:
    # e.g. "(0.5,0,0) (0,0.5,0) (0,0,2)"
    parts = re.findall(r"\([^)]*\)|none", text)
    if len(parts) != 3 or "none" in parts:
        raise VolumeError(f"expected 3 space direction vectors, got {text!r}")
    vectors = np.array([_parse_vector(p) for p in parts])
    spacing = np.zeros(3)
    for axis, vec in enumerate(vectors):
        off_axis = [a for a in range(3) if a != axis]
        if np.abs(vec[off_axis]).max() > 1e-12 or vec[axis] == 0:
            raise VolumeError(
                f"only axis-aligned space directions are supported, got {text!r}"
            )
        spacing[axis] = abs(vec[axis])
    return spacing


def load_nrrd(path: str | os.PathLike) -> Volume:
    """Parse an attached-header raw NRRD into a Volume."""
    with open(path, "rb") as fh:
        blob = fh.read()

    newline = blob.find(b"\n")
    if newline < 0 or not blob[:newline].strip().startswith(b"NRRD"):
        raise VolumeError(f"{path}: not an NRRD file")

    fields: dict[str, str] = {}
    pos = newline + 1
    while True:
        end = blob.find(b"\n", pos)
        if end < 0:
            raise VolumeError(f"{path}: header never terminated by a blank line")
        line = blob[pos:end].decode("ascii", errors="replace").rstrip("\r")
        pos = end + 1
        if line == "":
            break
        if line.startswith("#"):
            continue
        if ":" not in line:
            raise VolumeError(f"{path}: malformed header line {line!r}")
        key, value = line.split(":", 1)
        fields[key.strip().lower()] = value.lstrip("= ").strip()

    encoding = fields.get("encoding", "")
    if encoding != "raw":
        raise VolumeError(f"{path}: unsupported encoding {encoding!r} (only raw)")
    if int(fields.get("dimension", "0")) != 3:
        raise VolumeError(f"{path}: only 3-D volumes are supported")

    type_name = fields.get("type", "")
    dtype = _NRRD_TYPES.get(type_name)
    if dtype is None:
        raise VolumeError(f"{path}: unsupported type {type_name!r}")

    sizes = [int(v) for v in fields.get("sizes", "").split()]
    if len(sizes) != 3 or any(s <= 0 for s in sizes):
        raise VolumeError(f"{path}: bad sizes {fields.get('sizes')!r}")

    if "space directions" in fields:
        spacing = _parse_space_directions(fields["space directions"])
    elif "spacings" in fields:
        spacing = np.array([float(v) for v in fields["spacings"].split()])
    else:
        spacing = np.ones(3)

    origin = _parse_vector(fields["space origin"]) if "space origin" in fields else np.zeros(3)

    dt = np.dtype(dtype)
    if dt.itemsize > 1:
        endian = fields.get("endian")
        if endian not in ("little", "big"):
            raise VolumeError(f"{path}: endian field required for {type_name}")
        dt = dt.newbyteorder("<" if endian == "little" else ">")

    expected = sizes[0] * sizes[1] * sizes[2] * dt.itemsize
    raw = blob[pos:pos + expected]
    if len(raw) < expected:
        raise VolumeError(f"{path}: truncated data, need {expected} bytes, got {len(raw)}")

    flat = np.frombuffer(raw, dtype=dt).astype(dtype)  # native order copy
    # wire order: first axis fastest; expose as data[i, j, k]
    data = flat.reshape(sizes[2], sizes[1], sizes[0]).transpose(2, 1, 0)
    return Volume(np.ascontiguousarray(data), spacing, origin)


def save_nrrd(path: str | os.PathLike, volume: Volume, endian: str = "little") -> None:
    """Debug writer for the same NRRD subset load_nrrd reads."""
    dtype = volume.data.dtype.type
    if dtype not in _TYPE_NAMES:
        raise VolumeError(f"cannot write voxel dtype {volume.data.dtype}")
    d0, d1, d2 = volume.dims
    sx, sy, sz = volume.spacing
    header = [
        "NRRD0004",
        f"type: {_TYPE_NAMES[dtype]}",
        "dimension: 3",
        f"sizes: {d0} {d1} {d2}",
        "encoding: raw",
        f"space directions: ({sx},0,0) (0,{sy},0) (0,0,{sz})",
        f"space origin: ({volume.origin[0]},{volume.origin[1]},{volume.origin[2]})",
    ]
    if volume.data.dtype.itemsize > 1:
        header.append(f"endian: {endian}")
    wire = volume.data.transpose(2, 1, 0).astype(
        volume.data.dtype.newbyteorder("<" if endian == "little" else ">")
    )
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n\n").encode("ascii"))
        fh.write(wire.tobytes())


def slice_axis(volume: Volume, axis: int, index: int) -> SliceImage:
    """Extract the axis-aligned plane at ``index`` along ``axis``.

    The in-plane axes are the remaining volume axes in order; pixel (x, y)
    of the output sits exactly at the source voxel center.
    """
    if axis not in (0, 1, 2):
        raise VolumeError(f"axis must be 0, 1, or 2, got {axis}")
    dims = volume.dims
    if not 0 <= index < dims[axis]:
        raise VolumeError(f"index {index} out of range for axis {axis} of size {dims[axis]}")

    u_axis, v_axis = [a for a in range(3) if a != axis]
    selector: list = [slice(None)] * 3
    selector[axis] = index
    plane = volume.data[tuple(selector)]  # shape (dims[u], dims[v])

    origin_ijk = np.zeros(3)
    origin_ijk[axis] = index
    basis = np.zeros((2, 3))
    basis[0, u_axis] = 1.0
    basis[1, v_axis] = 1.0
    return SliceImage(
        width=dims[u_axis],
        height=dims[v_axis],
        pixel_spacing=np.array([volume.spacing[u_axis], volume.spacing[v_axis]]),
        origin=volume.voxel_to_world(origin_ijk),
        basis=basis,
        data=plane.T.copy(),  # rows are v, columns are u
    )


def reslice_plane(
    volume: Volume,
    origin: np.ndarray,
    basis: np.ndarray,
    out_width: int,
    out_height: int,
    out_spacing: tuple[float, float],
) -> SliceImage:
    """Sample an arbitrary plane by trilinear interpolation.

    ``origin`` is the world position of pixel (0, 0); ``basis`` holds two
    orthonormal in-plane directions.  Pixels outside the volume take the
    voxel type's minimum.
    """
    origin = np.asarray(origin, dtype=np.float64)
    basis = np.asarray(basis, dtype=np.float64)
    if basis.shape != (2, 3) or not np.allclose(basis @ basis.T, np.eye(2), atol=1e-9):
        raise VolumeError("basis must be two orthonormal 3-vectors")
    if out_width <= 0 or out_height <= 0:
        raise VolumeError("output dimensions must be positive")

    xs = np.arange(out_width) * out_spacing[0]
    ys = np.arange(out_height) * out_spacing[1]
    world = (
        origin[None, None, :]
        + ys[:, None, None] * basis[1][None, None, :]
        + xs[None, :, None] * basis[0][None, None, :]
    )
    coords = volume.world_to_voxel(world.reshape(-1, 3))
    fill = type_minimum(volume.data.dtype)
    values = trilinear_sample(volume.data, np.ascontiguousarray(coords), fill)
    return SliceImage(
        width=out_width,
        height=out_height,
        pixel_spacing=np.asarray(out_spacing, dtype=np.float64),
        origin=origin,
        basis=basis,
        data=values.reshape(out_height, out_width),
    )


def window_level(image: SliceImage, window: float, level: float) -> np.ndarray:
    """Map slice values to 8-bit grayscale; round-half-up, so v = level -> 128."""
    if window <= 0:
        raise VolumeError("window must be positive")
    data = image.data.astype(np.float64)
    normalized = np.clip((data - (level - window / 2.0)) / window, 0.0, 1.0)
    return np.floor(normalized * 255.0 + 0.5).astype(np.uint8)


def slice_to_png(image: SliceImage, window: float, level: float) -> bytes:
    gray = window_level(image, window, level)
    buf = io.BytesIO()
    Image.fromarray(gray, mode="L").save(buf, format="PNG")
    return buf.getvalue()
