"""Reassembly of complete messages from an arbitrarily fragmented byte stream.

One framer per connection; decode errors poison the framer (the
connection is failed rather than resynchronized).
"""

from collections.abc import Iterable, Iterator

from scopenav.igtl.messages import (
    HEADER_SIZE,
    Body,
    MessageHeader,
    ProtocolError,
    TruncatedError,
    decode_message,
)


class MessageFramer:
    def __init__(self):
        self._buffer = bytearray()
        self._failed = False

    @property
    def buffered(self) -> int:
        return len(self._buffer)

    @property
    def at_boundary(self) -> bool:
        """True when no partial message is pending."""
        return len(self._buffer) == 0

    def feed(self, data: bytes) -> list[tuple[MessageHeader, Body]]:
        """Absorb a fragment, return every message completed by it."""
        if self._failed:
            raise ProtocolError("framer previously failed; connection must be dropped")
        self._buffer.extend(data)
        messages = []
        while len(self._buffer) >= HEADER_SIZE:
            header = MessageHeader.decode(bytes(self._buffer[:HEADER_SIZE]))
            total = HEADER_SIZE + header.body_size
            if len(self._buffer) < total:
                break
            raw = bytes(self._buffer[:total])
            del self._buffer[:total]
            try:
                messages.append(decode_message(raw))
            except ProtocolError:
                self._failed = True
                raise
        return messages


def frame_stream(chunks: Iterable[bytes]) -> Iterator[tuple[MessageHeader, Body]]:
    """Yield complete messages from a fragmented chunk source.

    Raises TruncatedError if the source ends mid-message.
    """
    framer = MessageFramer()
    for chunk in chunks:
        yield from framer.feed(chunk)
    if not framer.at_boundary:
        raise TruncatedError(f"stream ended with {framer.buffered} bytes of partial message")
