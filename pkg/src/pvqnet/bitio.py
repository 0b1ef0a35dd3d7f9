"""Bit-exact stream primitives: MSB-first within bytes, big-endian fields."""

from __future__ import annotations

__all__ = ["StreamError", "BitWriter", "BitReader"]


class StreamError(ValueError):
    """Read past the end of a bitstream or malformed bit-level content."""


class BitWriter:
    """Accumulates bits most-significant-first; pads the tail with zeros."""

    def __init__(self) -> None:
        self._out = bytearray()
        self._acc = 0
        self._fill = 0
        self._bits = 0

    @property
    def bit_length(self) -> int:
        return self._bits

    def write_bit(self, bit: int) -> None:
        self._acc = (self._acc << 1) | (bit & 1)
        self._fill += 1
        self._bits += 1
        if self._fill == 8:
            self._out.append(self._acc)
            self._acc = 0
            self._fill = 0

    def write_bits(self, value: int, width: int) -> None:
        """Write a non-negative value as a fixed-width big-endian field."""
        if width < 0:
            raise ValueError("width must be non-negative")
        if value < 0 or (width < value.bit_length()):
            raise ValueError(f"value {value} does not fit in {width} bits")
        for shift in range(width - 1, -1, -1):
            self.write_bit((value >> shift) & 1)

    def getvalue(self) -> bytes:
        if self._fill:
            return bytes(self._out) + bytes([self._acc << (8 - self._fill)])
        return bytes(self._out)


class BitReader:
    """Reads bits most-significant-first from a byte payload.

    bit_length bounds the readable region; the byte-alignment padding
    beyond it is invisible to the caller.
    """

    def __init__(self, payload: bytes, bit_length: int | None = None) -> None:
        limit = 8 * len(payload) if bit_length is None else bit_length
        if limit > 8 * len(payload):
            raise StreamError(f"bit length {limit} exceeds payload of {8 * len(payload)} bits")
        self._data = payload
        self._limit = limit
        self._pos = 0

    @property
    def position(self) -> int:
        return self._pos

    @property
    def remaining(self) -> int:
        return self._limit - self._pos

    def read_bit(self) -> int:
        if self._pos >= self._limit:
            raise StreamError("truncated stream: read past the end")
        byte = self._data[self._pos >> 3]
        bit = (byte >> (7 - (self._pos & 7))) & 1
        self._pos += 1
        return bit

    def read_bits(self, width: int) -> int:
        value = 0
        for _ in range(width):
            value = (value << 1) | self.read_bit()
        return value
