"""OpenIGTLink v1 message encoding and decoding.

Wire layout (all integers and floats big-endian):

  header, 58 bytes:
    u16 version | char[12] type_name | char[20] device_name |
    u64 timestamp (upper 32 bits whole seconds, lower 32 fractional) |
    u64 body_size | u64 body_crc

  TRANSFORM body, 48 bytes: 12 x f32, column-major 3x3 rotation then
  translation (mm).

  POINT body: n x 136-byte elements, each
    char[64] name | char[32] group | u8[4] rgba | f32[3] position |
    f32 diameter | char[20] owner

  STATUS body: u16 code | i64 subcode | char[20] error_name |
    variable ASCII message.  Code 1 means OK.

Version-2 headers are accepted on decode (the body, including its
extension header, is returned opaque) but never emitted.  Unknown type
names decode to OpaqueBody rather than failing.
"""

import struct
import time
from dataclasses import dataclass, field

import numpy as np

from scopenav._kernels import crc64

IGTL_PORT = 18944
HEADER_SIZE = 58
TRANSFORM_BODY_SIZE = 48
POINT_ELEMENT_SIZE = 136
STATUS_FIXED_SIZE = 30

_HEADER_STRUCT = struct.Struct(">H12s20sQQQ")
_POINT_STRUCT = struct.Struct(">64s32s4B3ff20s")
_STATUS_STRUCT = struct.Struct(">Hq20s")


class ProtocolError(Exception):
    """Base for wire-level decode failures."""


class TruncatedError(ProtocolError):
    """Fewer bytes than the header or the announced body require."""


class CrcMismatchError(ProtocolError):
    """Body bytes do not match the header CRC."""


class BodySizeError(ProtocolError):
    """Buffer length disagrees with the announced body size."""


def igtl_timestamp(seconds: float | None = None) -> int:
    """Seconds since the Unix epoch as 32.32 fixed point."""
    if seconds is None:
        seconds = time.time()
    if seconds < 0:
        raise ValueError("timestamp must be non-negative")
    whole = int(seconds)
    frac = int((seconds - whole) * (1 << 32))
    return (whole << 32) | (frac & 0xFFFFFFFF)


def timestamp_to_seconds(fixed: int) -> float:
    return (fixed >> 32) + (fixed & 0xFFFFFFFF) / (1 << 32)


def _pack_name(value: str, width: int, what: str) -> bytes:
    raw = value.encode("ascii")
    if len(raw) > width:
        raise ValueError(f"{what} {value!r} exceeds {width} bytes")
    return raw.ljust(width, b"\x00")


def _unpack_name(raw: bytes) -> str:
    return raw.split(b"\x00", 1)[0].decode("ascii", errors="replace")


@dataclass
class MessageHeader:
    version: int
    type_name: str
    device_name: str
    timestamp: int
    body_size: int
    body_crc: int

    def encode(self) -> bytes:
        return _HEADER_STRUCT.pack(
            self.version,
            _pack_name(self.type_name, 12, "type name"),
            _pack_name(self.device_name, 20, "device name"),
            self.timestamp,
            self.body_size,
            self.body_crc,
        )

    @classmethod
    def decode(cls, data: bytes) -> "MessageHeader":
        if len(data) < HEADER_SIZE:
            raise TruncatedError(f"header needs {HEADER_SIZE} bytes, got {len(data)}")
        version, type_raw, device_raw, ts, body_size, crc = _HEADER_STRUCT.unpack(
            data[:HEADER_SIZE]
        )
        if version not in (1, 2):
            raise ProtocolError(f"unsupported header version {version}")
        return cls(version, _unpack_name(type_raw), _unpack_name(device_raw), ts, body_size, crc)


@dataclass
class TransformBody:
    """Rigid pose: 3x3 orthonormal rotation plus translation in mm."""

    rotation: np.ndarray
    translation: np.ndarray
    TYPE_NAME = "TRANSFORM"

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64)
        self.translation = np.asarray(self.translation, dtype=np.float64)
        if self.rotation.shape != (3, 3):
            raise ValueError("rotation must be 3x3")
        if self.translation.shape != (3,):
            raise ValueError("translation must be a 3-vector")
        det = np.linalg.det(self.rotation)
        if abs(det - 1.0) >= 1e-5:
            raise ValueError(f"rotation determinant {det} not within 1e-5 of 1")

    def __eq__(self, other):
        return (
            isinstance(other, TransformBody)
            and np.array_equal(self.rotation, other.rotation)
            and np.array_equal(self.translation, other.translation)
        )

    def encode_body(self) -> bytes:
        values = list(self.rotation.T.reshape(-1)) + list(self.translation)
        return struct.pack(">12f", *values)

    @classmethod
    def decode_body(cls, data: bytes) -> "TransformBody":
        if len(data) != TRANSFORM_BODY_SIZE:
            raise BodySizeError(f"TRANSFORM body must be 48 bytes, got {len(data)}")
        values = struct.unpack(">12f", data)
        rotation = np.array(values[:9], dtype=np.float64).reshape(3, 3).T
        translation = np.array(values[9:], dtype=np.float64)
        try:
            return cls(rotation, translation)
        except ValueError as exc:
            raise ProtocolError(str(exc)) from exc


@dataclass
class PointElement:
    name: str
    group: str = ""
    rgba: tuple[int, int, int, int] = (255, 0, 0, 255)
    position: tuple[float, float, float] = (0.0, 0.0, 0.0)
    diameter: float = 0.0
    owner: str = ""

    def encode(self) -> bytes:
        return _POINT_STRUCT.pack(
            _pack_name(self.name, 64, "point name"),
            _pack_name(self.group, 32, "point group"),
            *self.rgba,
            *self.position,
            self.diameter,
            _pack_name(self.owner, 20, "point owner"),
        )

    @classmethod
    def decode(cls, data: bytes) -> "PointElement":
        name, group, r, g, b, a, x, y, z, diameter, owner = _POINT_STRUCT.unpack(data)
        return cls(
            _unpack_name(name), _unpack_name(group), (r, g, b, a), (x, y, z),
            diameter, _unpack_name(owner),
        )


@dataclass
class PointBody:
    elements: list[PointElement] = field(default_factory=list)
    TYPE_NAME = "POINT"

    def encode_body(self) -> bytes:
        return b"".join(el.encode() for el in self.elements)

    @classmethod
    def decode_body(cls, data: bytes) -> "PointBody":
        if len(data) % POINT_ELEMENT_SIZE != 0:
            raise BodySizeError(
                f"POINT body length {len(data)} not a multiple of {POINT_ELEMENT_SIZE}"
            )
        elements = [
            PointElement.decode(data[off:off + POINT_ELEMENT_SIZE])
            for off in range(0, len(data), POINT_ELEMENT_SIZE)
        ]
        return cls(elements)


STATUS_OK = 1


@dataclass
class StatusBody:
    code: int = STATUS_OK
    subcode: int = 0
    error_name: str = ""
    message: str = ""
    TYPE_NAME = "STATUS"

    @property
    def ok(self) -> bool:
        return self.code == STATUS_OK

    def encode_body(self) -> bytes:
        fixed = _STATUS_STRUCT.pack(
            self.code, self.subcode, _pack_name(self.error_name, 20, "error name")
        )
        return fixed + self.message.encode("ascii")

    @classmethod
    def decode_body(cls, data: bytes) -> "StatusBody":
        if len(data) < STATUS_FIXED_SIZE:
            raise BodySizeError(f"STATUS body needs >= {STATUS_FIXED_SIZE} bytes")
        code, subcode, error_raw = _STATUS_STRUCT.unpack(data[:STATUS_FIXED_SIZE])
        message = data[STATUS_FIXED_SIZE:].decode("ascii", errors="replace")
        return cls(code, subcode, _unpack_name(error_raw), message)


@dataclass
class OpaqueBody:
    """Unrecognized (or version-2) message carried through untouched."""

    type_name: str
    data: bytes

    @property
    def TYPE_NAME(self) -> str:  # noqa: N802 - parallel to class constants
        return self.type_name

    def encode_body(self) -> bytes:
        return self.data


_BODY_TYPES = {
    "TRANSFORM": TransformBody,
    "POINT": PointBody,
    "STATUS": StatusBody,
}

Body = TransformBody | PointBody | StatusBody | OpaqueBody


def encode_message(body: Body, device_name: str = "", timestamp: float | None = None) -> bytes:
    """Serialize one version-1 message: 58-byte header plus body."""
    type_name = body.TYPE_NAME
    if not isinstance(body, OpaqueBody) and type_name not in _BODY_TYPES:
        raise ValueError(f"unsupported message type {type_name!r}")
    payload = body.encode_body()
    header = MessageHeader(
        version=1,
        type_name=type_name,
        device_name=device_name,
        timestamp=igtl_timestamp(timestamp),
        body_size=len(payload),
        body_crc=crc64(payload),
    )
    return header.encode() + payload


def decode_message(data: bytes) -> tuple[MessageHeader, Body]:
    """Parse one complete message; the buffer must hold exactly one message."""
    header = MessageHeader.decode(data)
    expected = HEADER_SIZE + header.body_size
    if len(data) < expected:
        raise TruncatedError(
            f"body needs {header.body_size} bytes, got {len(data) - HEADER_SIZE}"
        )
    if len(data) > expected:
        raise BodySizeError(f"{len(data) - expected} trailing bytes after message")
    payload = data[HEADER_SIZE:expected]
    actual_crc = crc64(payload)
    if actual_crc != header.body_crc:
        raise CrcMismatchError(
            f"body CRC {actual_crc:#018x} != header CRC {header.body_crc:#018x}"
        )
    if header.version != 1:
        body: Body = OpaqueBody(header.type_name, payload)
    else:
        body_cls = _BODY_TYPES.get(header.type_name)
        if body_cls is None:
            body = OpaqueBody(header.type_name, payload)
        else:
            body = body_cls.decode_body(payload)
    return header, body
