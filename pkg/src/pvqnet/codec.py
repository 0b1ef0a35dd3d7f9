"""Lossless codecs for lattice-point coordinates, plus bits/weight math.

Four interchangeable codecs:

* exp-golomb: order-0 exponential Golomb over zigzag-mapped values.
  Cheap, no table, 1 bit per zero.
* rle-zero: zero-run lengths as unsigned exp-Golomb alternating with
  nonzero values in the signed code; wins when zeros come in long runs.
* huffman-escape: canonical Huffman over values below a threshold V,
  with an escape symbol carrying a fixed-width residual for the rest.
* pvq-index: the fixed-width rank of the whole point, exactly
  ceil(log2 Np) bits; optimal but impractical beyond small lattices.

All streams are MSB-first with big-endian fields, so payloads are
byte-exact across platforms.
"""

from __future__ import annotations

import heapq
import struct
from dataclasses import dataclass

import numpy as np

from .bitio import BitReader, BitWriter, StreamError
from .pvq import PointIndex, PvqPoint, count_points, index_to_point, point_to_index

__all__ = [
    "Bitstream",
    "CodecError",
    "CODEC_GOLOMB",
    "CODEC_RLE",
    "CODEC_HUFFMAN",
    "CODEC_INDEX",
    "CODECS",
    "INDEX_GUARD_CELLS",
    "golomb_encode",
    "golomb_decode",
    "rle_encode",
    "rle_decode",
    "huffman_encode",
    "huffman_decode",
    "index_encode",
    "index_decode",
    "encode_coords",
    "decode_coords",
    "bits_per_weight",
    "write_container",
    "read_container",
]

CODEC_GOLOMB = "exp-golomb"
CODEC_RLE = "rle-zero"
CODEC_HUFFMAN = "huffman-escape"
CODEC_INDEX = "pvq-index"
CODECS = (CODEC_GOLOMB, CODEC_RLE, CODEC_HUFFMAN, CODEC_INDEX)

# the point<->index tables hold n*(k+1) big integers; beyond this the
# index codec refuses and points at the streaming codecs instead
INDEX_GUARD_CELLS = 5_000_000


class CodecError(ValueError):
    """Malformed, truncated, or oversized codec input."""


@dataclass(frozen=True)
class Bitstream:
    """One encoded coordinate sequence with its framing metadata."""

    codec: str
    payload: bytes
    bit_length: int
    n: int
    k: int
    params: tuple = ()

    def __post_init__(self) -> None:
        if self.codec not in CODECS:
            raise CodecError(f"unknown codec {self.codec!r}")
        if self.bit_length > 8 * len(self.payload):
            raise CodecError("bit length exceeds payload size")


def zigzag(v: int) -> int:
    """Signed to unsigned: 0 -> 0, +v -> 2v-1, -v -> 2v."""
    return 2 * v - 1 if v > 0 else -2 * v


def unzigzag(u: int) -> int:
    return (u + 1) // 2 if u & 1 else -(u // 2)


def _eg_write(w: BitWriter, u: int) -> None:
    """Order-0 exp-Golomb: bit_length(u+1)-1 zeros, then u+1 in binary."""
    width = (u + 1).bit_length()
    w.write_bits(0, width - 1)
    w.write_bits(u + 1, width)


def _eg_read(r: BitReader) -> int:
    zeros = 0
    while r.read_bit() == 0:
        zeros += 1
    return (1 << zeros | r.read_bits(zeros)) - 1


def golomb_code_length(v: int) -> int:
    """Bits the signed exp-Golomb code spends on v: 2*floor(log2(u+1))+1."""
    return 2 * (zigzag(v) + 1).bit_length() - 1


def _coords_list(coords) -> list[int]:
    arr = np.asarray(coords)
    if arr.ndim != 1:
        raise CodecError(f"expected a 1-D coordinate sequence, got shape {arr.shape}")
    if arr.size and not (np.issubdtype(arr.dtype, np.integer) or arr.dtype == object):
        raise CodecError(f"coordinates must be integers, got dtype {arr.dtype}")
    return [int(v) for v in arr.tolist()]


def _finish_decode(r: BitReader, codec: str) -> None:
    if r.remaining:
        raise CodecError(f"{codec}: {r.remaining} bits of trailing garbage after the last value")


def golomb_encode(coords) -> Bitstream:
    """Signed exp-Golomb stream; a zero costs exactly one bit."""
    values = _coords_list(coords)
    w = BitWriter()
    for v in values:
        _eg_write(w, zigzag(v))
    return Bitstream(CODEC_GOLOMB, w.getvalue(), w.bit_length,
                     n=len(values), k=sum(abs(v) for v in values))


def golomb_decode(b: Bitstream, count: int) -> list[int]:
    r = BitReader(b.payload, b.bit_length)
    try:
        out = [unzigzag(_eg_read(r)) for _ in range(count)]
    except StreamError as exc:
        raise CodecError(f"{b.codec}: {exc}") from exc
    _finish_decode(r, b.codec)
    return out


def rle_encode(coords) -> Bitstream:
    """Alternating zero-run / nonzero-value stream.

    Runs are unsigned exp-Golomb (a run of zero is one '1' bit), values
    use the signed code.  A trailing run is emitted only when the input
    ends in zeros.
    """
    values = _coords_list(coords)
    w = BitWriter()
    run = 0
    for v in values:
        if v == 0:
            run += 1
            continue
        _eg_write(w, run)
        _eg_write(w, zigzag(v))
        run = 0
    if run:
        _eg_write(w, run)
    return Bitstream(CODEC_RLE, w.getvalue(), w.bit_length,
                     n=len(values), k=sum(abs(v) for v in values))


def rle_decode(b: Bitstream, count: int) -> list[int]:
    r = BitReader(b.payload, b.bit_length)
    out: list[int] = []
    try:
        while len(out) < count:
            run = _eg_read(r)
            if len(out) + run > count:
                raise CodecError(f"{b.codec}: zero run overflows the declared count")
            out.extend([0] * run)
            if len(out) == count:
                break
            v = unzigzag(_eg_read(r))
            if v == 0:
                raise CodecError(f"{b.codec}: explicit zero where a nonzero value belongs")
            out.append(v)
    except StreamError as exc:
        raise CodecError(f"{b.codec}: {exc}") from exc
    _finish_decode(r, b.codec)
    return out


def _huffman_lengths(freqs: dict[int, int]) -> dict[int, int]:
    """Code length per symbol from frequencies; deterministic tie-breaks.

    A single-symbol alphabet gets a 1-bit code.
    """
    if not freqs:
        raise CodecError("cannot build a code over an empty alphabet")
    if len(freqs) == 1:
        return {next(iter(freqs)): 1}
    heap = [(count, (sym,)) for sym, count in sorted(freqs.items())]
    heapq.heapify(heap)
    lengths = dict.fromkeys(freqs, 0)
    while len(heap) > 1:
        c1, s1 = heapq.heappop(heap)
        c2, s2 = heapq.heappop(heap)
        for sym in s1 + s2:
            lengths[sym] += 1
        heapq.heappush(heap, (c1 + c2, tuple(sorted(s1 + s2))))
    return lengths


def _canonical_codes(lengths: dict[int, int]) -> dict[int, tuple[int, int]]:
    """Symbol -> (code, width) in canonical order (width, then symbol)."""
    code = 0
    prev = 0
    out = {}
    for width, sym in sorted((w, s) for s, w in lengths.items() if w):
        code <<= width - prev
        out[sym] = (code, width)
        code += 1
        prev = width
    return out


def huffman_encode(coords, v_threshold: int) -> Bitstream:
    """Canonical Huffman over values with |v| < v_threshold, plus escape.

    Escaped values append a fixed-width residual; the width is sized
    once from the largest magnitude in the input, so every residual
    fits.  The header carries only the code lengths; canonical
    reconstruction makes decoding deterministic.
    """
    values = _coords_list(coords)
    if not values:
        raise CodecError("huffman codec needs at least one value")
    if not 1 <= v_threshold < 2**15:
        raise CodecError(f"threshold must be in 1..{2**15 - 1}, got {v_threshold}")

    escape = 2 * v_threshold - 1
    vmax = max(abs(v) for v in values)
    # -vmax zigzags one above +vmax, so size the residual from that
    residual_width = (2 * vmax - escape).bit_length() if vmax >= v_threshold else 0

    freqs: dict[int, int] = {}
    for v in values:
        sym = zigzag(v) if abs(v) < v_threshold else escape
        freqs[sym] = freqs.get(sym, 0) + 1
    lengths = _huffman_lengths(freqs)
    codes = _canonical_codes(lengths)

    w = BitWriter()
    for v in values:
        if abs(v) < v_threshold:
            code, width = codes[zigzag(v)]
            w.write_bits(code, width)
        else:
            code, width = codes[escape]
            w.write_bits(code, width)
            w.write_bits(zigzag(v) - escape, residual_width)

    table = tuple(lengths.get(sym, 0) for sym in range(escape + 1))
    return Bitstream(CODEC_HUFFMAN, w.getvalue(), w.bit_length,
                     n=len(values), k=sum(abs(v) for v in values),
                     params=(v_threshold, residual_width, table))


def huffman_decode(b: Bitstream, count: int) -> list[int]:
    try:
        v_threshold, residual_width, table = b.params
    except ValueError as exc:
        raise CodecError(f"{b.codec}: malformed parameter tuple") from exc
    escape = 2 * v_threshold - 1
    if len(table) != escape + 1:
        raise CodecError(f"{b.codec}: length table has {len(table)} entries, expected {escape + 1}")
    codes = _canonical_codes({sym: wdt for sym, wdt in enumerate(table) if wdt})
    by_code = {cw: sym for sym, cw in codes.items()}
    if not by_code:
        raise CodecError(f"{b.codec}: empty code table")
    max_width = max(w for _, w in codes.values())

    r = BitReader(b.payload, b.bit_length)
    out: list[int] = []
    try:
        for _ in range(count):
            code = 0
            width = 0
            while True:
                code = (code << 1) | r.read_bit()
                width += 1
                sym = by_code.get((code, width))
                if sym is not None:
                    break
                if width > max_width:
                    raise CodecError(f"{b.codec}: bit pattern matches no code")
            if sym == escape:
                out.append(unzigzag(escape + r.read_bits(residual_width)))
            else:
                out.append(unzigzag(sym))
    except StreamError as exc:
        raise CodecError(f"{b.codec}: {exc}") from exc
    _finish_decode(r, b.codec)
    return out


def _check_index_guard(n: int, k: int) -> None:
    cells = n * (k + 1)
    if cells > INDEX_GUARD_CELLS:
        raise CodecError(
            f"index codec needs a {n} x {k + 1} rank table ({cells} cells, limit "
            f"{INDEX_GUARD_CELLS}); use {CODEC_GOLOMB}, {CODEC_RLE} or {CODEC_HUFFMAN} instead"
        )


def index_encode(p: PvqPoint) -> Bitstream:
    """Fixed-width rank of the point: exactly ceil(log2 Np(n, k)) bits."""
    _check_index_guard(p.n, p.k)
    idx = point_to_index(p)
    w = BitWriter()
    w.write_bits(idx.value, idx.bits)
    return Bitstream(CODEC_INDEX, w.getvalue(), w.bit_length, n=p.n, k=p.k)


def index_decode(b: Bitstream) -> PvqPoint:
    _check_index_guard(b.n, b.k)
    total = count_points(b.n, b.k)
    width = 0 if total <= 1 else (total - 1).bit_length()
    if b.bit_length != width:
        raise CodecError(f"{b.codec}: payload is {b.bit_length} bits, expected {width}")
    r = BitReader(b.payload, b.bit_length)
    value = r.read_bits(width)
    if value >= total:
        raise CodecError(f"{b.codec}: rank {value} out of range for {total} points")
    return index_to_point(PointIndex(value, b.n, b.k))


def encode_coords(coords, codec: str, v_threshold: int = 8) -> Bitstream:
    """Encode a flat coordinate sequence under any codec by name."""
    if codec == CODEC_GOLOMB:
        return golomb_encode(coords)
    if codec == CODEC_RLE:
        return rle_encode(coords)
    if codec == CODEC_HUFFMAN:
        return huffman_encode(coords, v_threshold)
    if codec == CODEC_INDEX:
        values = _coords_list(coords)
        k = sum(abs(v) for v in values)
        if k < 1:
            raise CodecError("index codec cannot represent the all-zero sequence")
        return index_encode(PvqPoint(tuple(values), k))
    raise CodecError(f"unknown codec {codec!r}")


def decode_coords(b: Bitstream) -> list[int]:
    if b.codec == CODEC_GOLOMB:
        return golomb_decode(b, b.n)
    if b.codec == CODEC_RLE:
        return rle_decode(b, b.n)
    if b.codec == CODEC_HUFFMAN:
        return huffman_decode(b, b.n)
    return list(index_decode(b).coords)


def bits_per_weight(b: Bitstream, n: int) -> float:
    """Payload bits per coordinate; header/framing not included."""
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    return b.bit_length / n


_CODEC_IDS = {CODEC_GOLOMB: 1, CODEC_RLE: 2, CODEC_HUFFMAN: 3, CODEC_INDEX: 4}
_IDS_CODEC = {v: k for k, v in _CODEC_IDS.items()}


def write_container(b: Bitstream) -> bytes:
    """Byte-exact framing: codec id, n, k, bit length, params, payload."""
    head = struct.pack("<BQQQ", _CODEC_IDS[b.codec], b.n, b.k, b.bit_length)
    if b.codec == CODEC_HUFFMAN:
        v_threshold, residual_width, table = b.params
        if any(width > 255 for width in table):
            raise CodecError("code lengths beyond 255 bits do not fit the container")
        head += struct.pack("<HBH", v_threshold, residual_width, len(table))
        head += bytes(table)
    payload = b.payload[: (b.bit_length + 7) // 8]
    return head + payload


def read_container(data: bytes, offset: int = 0) -> tuple[Bitstream, int]:
    """Parse one container; returns the stream and the next offset."""
    try:
        codec_id, n, k, bit_length = struct.unpack_from("<BQQQ", data, offset)
        offset += struct.calcsize("<BQQQ")
        codec = _IDS_CODEC.get(codec_id)
        if codec is None:
            raise CodecError(f"unknown codec id {codec_id}")
        params: tuple = ()
        if codec == CODEC_HUFFMAN:
            v_threshold, residual_width, n_lengths = struct.unpack_from("<HBH", data, offset)
            offset += struct.calcsize("<HBH")
            table = tuple(data[offset:offset + n_lengths])
            if len(table) != n_lengths:
                raise struct.error("length table truncated")
            offset += n_lengths
            params = (v_threshold, residual_width, table)
        nbytes = (bit_length + 7) // 8
        payload = bytes(data[offset:offset + nbytes])
        if len(payload) != nbytes:
            raise struct.error("payload truncated")
        offset += nbytes
    except struct.error as exc:
        raise CodecError(f"truncated container: {exc}") from exc
    return Bitstream(codec, payload, bit_length, n, k, params), offset
