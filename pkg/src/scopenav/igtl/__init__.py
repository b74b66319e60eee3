"""OpenIGTLink v1 wire protocol: message codec and stream framing."""

from scopenav.igtl.messages import (
    HEADER_SIZE,
    IGTL_PORT,
    BodySizeError,
    CrcMismatchError,
    MessageHeader,
    OpaqueBody,
    PointBody,
    PointElement,
    ProtocolError,
    StatusBody,
    TransformBody,
    TruncatedError,
    crc64,
    decode_message,
    encode_message,
    igtl_timestamp,
    timestamp_to_seconds,
)
from scopenav.igtl.framing import MessageFramer, frame_stream

__all__ = [
    "HEADER_SIZE",
    "IGTL_PORT",
    "BodySizeError",
    "CrcMismatchError",
    "MessageFramer",
    "MessageHeader",
    "OpaqueBody",
    "PointBody",
    "PointElement",
    "ProtocolError",
    "StatusBody",
    "TransformBody",
    "TruncatedError",
    "crc64",
    "decode_message",
    "encode_message",
    "frame_stream",
    "igtl_timestamp",
    "timestamp_to_seconds",
]
