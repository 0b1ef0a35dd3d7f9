"""Model container: 8-byte magic, length-prefixed text roster, raw tensors.

The header is line-oriented text so models diff cleanly; tensor bodies
are raw little-endian 32-bit values (IEEE-754 for float layers, signed
integers for quantized coordinates), row-major, in layer order.
"""

from __future__ import annotations

import math
import struct
from dataclasses import replace

import numpy as np

from .network import (
    ACTIVATIONS,
    INTEGER,
    KIND_CONV,
    KIND_DROPOUT,
    KIND_FC,
    KIND_INPUT,
    KIND_MAXPOOL,
    PARAM_KINDS,
    REAL,
    FloatParams,
    LayerSpec,
    Network,
    QuantizedParams,
    Tensor,
    _out_shape,
    _param_shapes,
)
from .pvq import PvqPoint

__all__ = [
    "MAGIC",
    "FORMAT_VERSION",
    "FormatError",
    "dump_network",
    "parse_network",
    "save_network",
    "load_network",
]

MAGIC = b"PVQNET01"
FORMAT_VERSION = 1

_I32_MIN = -(2**31)
_I32_MAX = 2**31 - 1


class FormatError(ValueError):
    """The byte stream is not a well-formed model file."""


# Header keys every kind must carry, beyond the `layer <name>` line.
_REQUIRED_KEYS = {
    KIND_INPUT: ("shape",),
    KIND_FC: ("activation", "units", "shift", "quantized"),
    KIND_CONV: ("activation", "out_channels", "kernel", "stride", "padding",
                "shift", "quantized"),
    KIND_MAXPOOL: ("pool",),
    KIND_DROPOUT: ("rate",),
}


def _format_tuple(values) -> str:
    return ",".join(str(int(v)) for v in values)


def _parse_tuple(text: str, key: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(","))
    except ValueError:
        raise FormatError(f"header field {key!r} is not a comma-separated "
                          f"integer list: {text!r}") from None


def _parse_int(text: str, key: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise FormatError(f"header field {key!r} is not an integer: {text!r}") from None


def _parse_float(text: str, key: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise FormatError(f"header field {key!r} is not a number: {text!r}") from None


def _layer_header(layer: LayerSpec) -> list[str]:
    lines = [f"layer {layer.name}", f"kind {layer.kind}"]
    if layer.kind == KIND_INPUT:
        lines.append(f"shape {_format_tuple(layer.shape)}")
    elif layer.kind == KIND_FC:
        lines.append(f"activation {layer.activation}")
        lines.append(f"units {layer.units}")
        lines.append(f"shift {layer.shift}")
    elif layer.kind == KIND_CONV:
        lines.append(f"activation {layer.activation}")
        lines.append(f"out_channels {layer.out_channels}")
        lines.append(f"kernel {_format_tuple(layer.kernel)}")
        lines.append(f"stride {layer.stride}")
        lines.append(f"padding {layer.padding}")
        lines.append(f"shift {layer.shift}")
    elif layer.kind == KIND_MAXPOOL:
        lines.append(f"pool {layer.pool}")
        if layer.pool_stride is not None:
            lines.append(f"pool_stride {layer.pool_stride}")
    elif layer.kind == KIND_DROPOUT:
        lines.append(f"rate {layer.rate!r}")
    if layer.kind in PARAM_KINDS:
        if layer.quantized:
            lines.append("quantized 1")
            lines.append(f"k {layer.params.k}")
            lines.append(f"rho {layer.params.rho!r}")
        else:
            lines.append("quantized 0")
    return lines


def _tensor_bytes(layer: LayerSpec) -> bytes:
    params = layer.params
    if isinstance(params, QuantizedParams):
        flat = np.concatenate([params.weights.ravel(), params.biases.ravel()])
        if flat.size and (flat.min() < _I32_MIN or flat.max() > _I32_MAX):
            raise FormatError(f"layer {layer.name}: coordinates do not fit in 32 bits")
        return flat.astype("<i4").tobytes()
    w = params.weights.data.astype("<f4").tobytes()
    b = params.biases.data.astype("<f4").tobytes()
    return w + b


def _roster_text(net: Network) -> str:
    header_lines = [f"pvqnet-model {FORMAT_VERSION}"]
    if net.name:
        if "\n" in net.name:
            raise FormatError("network name must not contain newlines")
        header_lines.append(f"name {net.name}")
    header_lines.append(f"layers {len(net.layers)}")
    for layer in net.layers:
        if "\n" in layer.name:
            raise FormatError(f"layer name {layer.name!r} must not contain newlines")
        header_lines.append("")
        header_lines.extend(_layer_header(layer))
    return "\n".join(header_lines) + "\n"


def dump_network(net: Network) -> bytes:
    """Serialize a network to the container byte string."""
    header = _roster_text(net).encode("utf-8")
    body = bytearray()
    for layer in net.layers:
        if layer.kind in PARAM_KINDS:
            body.extend(_tensor_bytes(layer))
    return MAGIC + struct.pack("<I", len(header)) + header + bytes(body)


def _split_blocks(text: str) -> tuple[list[str], list[list[str]]]:
    blocks: list[list[str]] = [[]]
    for raw in text.split("\n"):
        line = raw.rstrip()
        if not line:
            if blocks[-1]:
                blocks.append([])
            continue
        blocks[-1].append(line)
    if blocks and not blocks[-1]:
        blocks.pop()
    if not blocks:
        raise FormatError("empty model header")
    return blocks[0], blocks[1:]


def _block_fields(lines: list[str], context: str) -> dict[str, str]:
    fields: dict[str, str] = {}
    for line in lines:
        key, _, value = line.partition(" ")
        if not value:
            raise FormatError(f"{context}: header line {line!r} has no value")
        if key in fields:
            raise FormatError(f"{context}: duplicate header field {key!r}")
        fields[key] = value
    return fields


def _take(fields: dict[str, str], key: str, context: str) -> str:
    if key not in fields:
        raise FormatError(f"{context}: missing header field {key!r}")
    return fields.pop(key)


def _parse_layer_block(lines: list[str]) -> tuple[LayerSpec, int, float | None]:
    """Build the parameterless LayerSpec; returns (spec, k, rho) with
    k == -1 on unquantized layers."""
    head, _, name = lines[0].partition(" ")
    if head != "layer" or not name:
        raise FormatError(f"expected a 'layer <name>' line, got {lines[0]!r}")
    fields = _block_fields(lines[1:], f"layer {name}")
    context = f"layer {name}"
    kind = _take(fields, "kind", context)
    if kind not in _REQUIRED_KEYS:
        raise FormatError(f"{context}: unknown layer kind {kind!r}")

    spec_kwargs: dict = {"kind": kind, "name": name}
    k, rho = -1, None
    if kind == KIND_INPUT:
        spec_kwargs["shape"] = _parse_tuple(_take(fields, "shape", context), "shape")
    elif kind == KIND_MAXPOOL:
        spec_kwargs["pool"] = _parse_int(_take(fields, "pool", context), "pool")
        if "pool_stride" in fields:
            spec_kwargs["pool_stride"] = _parse_int(fields.pop("pool_stride"), "pool_stride")
    elif kind == KIND_DROPOUT:
        spec_kwargs["rate"] = _parse_float(_take(fields, "rate", context), "rate")
    else:
        activation = _take(fields, "activation", context)
        if activation not in ACTIVATIONS:
            raise FormatError(f"{context}: unknown activation {activation!r}")
        spec_kwargs["activation"] = activation
        spec_kwargs["shift"] = _parse_int(_take(fields, "shift", context), "shift")
        if kind == KIND_FC:
            spec_kwargs["units"] = _parse_int(_take(fields, "units", context), "units")
        else:
            spec_kwargs["out_channels"] = _parse_int(
                _take(fields, "out_channels", context), "out_channels")
            kernel = _parse_tuple(_take(fields, "kernel", context), "kernel")
            if len(kernel) != 2:
                raise FormatError(f"{context}: kernel needs exactly two entries")
            spec_kwargs["kernel"] = kernel
            spec_kwargs["stride"] = _parse_int(_take(fields, "stride", context), "stride")
            spec_kwargs["padding"] = _parse_int(_take(fields, "padding", context), "padding")
        quantized = _take(fields, "quantized", context)
        if quantized not in ("0", "1"):
            raise FormatError(f"{context}: quantized flag must be 0 or 1")
        if quantized == "1":
            k = _parse_int(_take(fields, "k", context), "k")
            rho = _parse_float(_take(fields, "rho", context), "rho")
            if k < 1:
                raise FormatError(f"{context}: k must be >= 1")
            if not (math.isfinite(rho) and rho >= 0):
                raise FormatError(f"{context}: rho must be finite and "
                                  f"non-negative, got {rho!r}")
    if fields:
        stray = ", ".join(sorted(fields))
        raise FormatError(f"{context}: unexpected header fields: {stray}")
    try:
        spec = LayerSpec(**spec_kwargs)
    except ValueError as exc:
        raise FormatError(f"{context}: {exc}") from None
    return spec, k, rho


def _read_params(layer: LayerSpec, k: int, rho: float | None,
                 wshape: tuple[int, ...], bshape: tuple[int, ...],
                 body: memoryview, offset: int) -> tuple[LayerSpec, int]:
    n_w = int(np.prod(wshape))
    n_b = int(np.prod(bshape))
    size = 4 * (n_w + n_b)
    if offset + size > len(body):
        raise FormatError(f"layer {layer.name}: body truncated "
                          f"(needs {size} bytes at offset {offset})")
    chunk = body[offset : offset + size]
    if k >= 0:
        flat = np.frombuffer(chunk, dtype="<i4").astype(np.int64)
        if rho > 0:
            try:
                point = PvqPoint(tuple(flat.tolist()), k)
            except ValueError as exc:
                raise FormatError(f"layer {layer.name}: {exc}") from None
        else:
            if np.any(flat):
                raise FormatError(f"layer {layer.name}: rho is zero but "
                                  "coordinates are not")
            point = PvqPoint((k,) + (0,) * (flat.size - 1), k)
        try:
            params = QuantizedParams(
                point=point, rho=rho, k=k,
                weights=Tensor.of(flat[:n_w].reshape(wshape), INTEGER),
                biases=Tensor.of(flat[n_w:], INTEGER),
            )
        except ValueError as exc:
            raise FormatError(f"layer {layer.name}: {exc}") from None
    else:
        values = np.frombuffer(chunk, dtype="<f4").astype(np.float64)
        params = FloatParams(
            weights=Tensor.of(values[:n_w].reshape(wshape), REAL),
            biases=Tensor.of(values[n_w:], REAL),
        )
    return replace(layer, params=params), offset + size


def _read_magic_header(data: bytes, magic: bytes) -> tuple[str, int]:
    """Check the magic, return (header text, body offset)."""
    if len(data) < len(magic) + 4:
        raise FormatError("file too short for the magic and header length")
    if data[: len(magic)] != magic:
        raise FormatError(f"bad magic {bytes(data[:len(magic)])!r}, "
                          f"expected {magic!r}")
    (header_len,) = struct.unpack_from("<I", data, len(magic))
    header_end = len(magic) + 4 + header_len
    if header_end > len(data):
        raise FormatError("declared header length runs past the end of the file")
    try:
        text = data[len(magic) + 4 : header_end].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"header is not valid UTF-8: {exc}") from None
    return text, header_end


def _parse_roster(text: str) -> tuple[str, list[tuple[LayerSpec, int, float | None]]]:
    preamble, layer_blocks = _split_blocks(text)
    fields = _block_fields(preamble, "preamble")
    version = _take(fields, "pvqnet-model", "preamble")
    if version != str(FORMAT_VERSION):
        raise FormatError(f"unsupported format version {version!r}")
    name = fields.pop("name", "")
    count = _parse_int(_take(fields, "layers", "preamble"), "layers")
    if fields:
        raise FormatError(f"preamble: unexpected fields: {', '.join(sorted(fields))}")
    if count != len(layer_blocks):
        raise FormatError(f"preamble declares {count} layers, "
                          f"header holds {len(layer_blocks)}")

    parsed = [_parse_layer_block(block) for block in layer_blocks]
    if not parsed or parsed[0][0].kind != KIND_INPUT:
        raise FormatError("the first layer must be the input layer")
    return name, parsed


def parse_network(data: bytes) -> Network:
    """Parse the container byte string back into a Network."""
    text, header_end = _read_magic_header(data, MAGIC)
    name, parsed = _parse_roster(text)

    # Walk the shape chain up front so every tensor size is known before
    # the body is touched.
    body = memoryview(data)[header_end:]
    offset = 0
    layers = [parsed[0][0]]
    shape = parsed[0][0].shape
    for spec, k, rho in parsed[1:]:
        if spec.kind in PARAM_KINDS:
            try:
                wshape, bshape = _param_shapes(spec, shape)
            except (ValueError, IndexError) as exc:
                raise FormatError(f"layer {spec.name}: {exc}") from None
            spec, offset = _read_params(spec, k, rho, wshape, bshape, body, offset)
        layers.append(spec)
        try:
            shape = _out_shape(spec, shape)
        except ValueError as exc:
            raise FormatError(f"layer {spec.name}: {exc}") from None
    if offset != len(body):
        raise FormatError(f"{len(body) - offset} unread bytes after the last tensor")
    try:
        return Network(tuple(layers), name=name)
    except ValueError as exc:
        raise FormatError(str(exc)) from None


def save_network(net: Network, path) -> None:
    with open(path, "wb") as fh:
        fh.write(dump_network(net))


def load_network(path) -> Network:
    with open(path, "rb") as fh:
        return parse_network(fh.read())
