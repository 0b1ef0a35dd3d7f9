"""Command-line surface: quantize, eval, stats, compress, cycles.

Exit codes: 0 success, 2 usage, 3 I/O, 4 malformed file or stream,
5 shape/config mismatch, 6 integer overflow.
"""

from __future__ import annotations

import argparse
import struct
import sys
from dataclasses import replace

import numpy as np

from .bitio import StreamError
from .codec import (
    CODEC_GOLOMB,
    CODEC_HUFFMAN,
    CODEC_INDEX,
    CODEC_RLE,
    CodecError,
    decode_coords,
    encode_coords,
    read_container,
    write_container,
)
from .idx import load_dataset
from .kernels import (
    ARCH_ADDSUB,
    ARCH_MULTIPLIER,
    ARCHITECTURES,
    IntegerOverflowError,
    estimate_cycles,
)
from .modelfile import (
    FormatError,
    _parse_roster,
    _read_magic_header,
    _read_params,
    _roster_text,
    _tensor_bytes,
    dump_network,
    load_network,
    save_network,
)
from .network import (
    INTEGER,
    KIND_CONV,
    PARAM_KINDS,
    Network,
    QuantizedParams,
    ShapeError,
    Tensor,
    _out_shape,
    _param_shapes,
    op_report,
)
from .pvq import PvqPoint
from .quantize import (
    ConfigError,
    QuantConfig,
    evaluate,
    layer_report,
    quantize_network,
    weight_stats,
)

__all__ = [
    "EXIT_OK",
    "EXIT_USAGE",
    "EXIT_IO",
    "EXIT_FORMAT",
    "EXIT_CONFIG",
    "EXIT_OVERFLOW",
    "ARCHIVE_MAGIC",
    "write_archive",
    "parse_archive",
    "read_archive",
    "build_parser",
    "main",
]

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_FORMAT = 4
EXIT_CONFIG = 5
EXIT_OVERFLOW = 6

ARCHIVE_MAGIC = b"PVQNETZ1"

_CODEC_FLAGS = {
    "golomb": CODEC_GOLOMB,
    "rle": CODEC_RLE,
    "huffman": CODEC_HUFFMAN,
    "index": CODEC_INDEX,
}

_HIST_HEADS = ("0", "±1", "±2..3", "±4..7", "Others")
_HIST_KEYS = ("0", "±1", "±2..3", "±4..7", "others")


# ---------------------------------------------------------------- archive

def write_archive(net: Network, codec: str) -> tuple[bytes, list[tuple]]:
    """Compressed model: magic, the model roster, then per parameter layer
    either a codec container (quantized) or raw float32 tensors.

    Returns the bytes plus per-layer report rows
    (name, n, payload bits, container overhead bytes).
    """
    if not any(l.quantized for l in net.parameterized()):
        raise ValueError("network has no quantized layers to compress")
    header = _roster_text(net).encode("utf-8")
    body = bytearray()
    rows = []
    for layer in net.parameterized():
        if layer.quantized:
            stream = encode_coords(layer.params.point.to_array(), codec)
            blob = write_container(stream)
            payload_bytes = (stream.bit_length + 7) // 8
            rows.append((layer.name, stream.n, stream.bit_length,
                         len(blob) - payload_bytes))
            body.extend(blob)
        else:
            body.extend(_tensor_bytes(layer))
    return ARCHIVE_MAGIC + struct.pack("<I", len(header)) + header + bytes(body), rows


def parse_archive(data: bytes) -> Network:
    """Rebuild the full network from a compressed archive."""
    text, header_end = _read_magic_header(data, ARCHIVE_MAGIC)
    name, parsed = _parse_roster(text)
    body = bytes(data[header_end:])
    offset = 0
    layers = [parsed[0][0]]
    shape = parsed[0][0].shape
    for spec, k, rho in parsed[1:]:
        if spec.kind in PARAM_KINDS:
            try:
                wshape, bshape = _param_shapes(spec, shape)
            except (ValueError, IndexError) as exc:
                raise FormatError(f"layer {spec.name}: {exc}") from None
            if k >= 0:
                stream, offset = read_container(body, offset)
                n = int(np.prod(wshape)) + int(np.prod(bshape))
                if stream.n != n:
                    raise FormatError(f"layer {spec.name}: container holds {stream.n} "
                                      f"coordinates, the roster implies {n}")
                coords = np.asarray(decode_coords(stream), dtype=np.int64)
                try:
                    point = PvqPoint(tuple(coords.tolist()), k)
                    flat = coords if rho > 0 else np.zeros(n, dtype=np.int64)
                    params = QuantizedParams(
                        point=point, rho=rho, k=k,
                        weights=Tensor.of(flat[: int(np.prod(wshape))].reshape(wshape), INTEGER),
                        biases=Tensor.of(flat[int(np.prod(wshape)) :], INTEGER),
                    )
                except ValueError as exc:
                    raise FormatError(f"layer {spec.name}: {exc}") from None
                spec = replace(spec, params=params)
            else:
                spec, offset = _read_params(spec, k, rho, wshape, bshape, body, offset)
        layers.append(spec)
        try:
            shape = _out_shape(spec, shape)
        except ValueError as exc:
            raise FormatError(f"layer {spec.name}: {exc}") from None
    if offset != len(body):
        raise FormatError(f"{len(body) - offset} unread bytes after the last layer")
    try:
        return Network(tuple(layers), name=name)
    except ValueError as exc:
        raise FormatError(str(exc)) from None


def read_archive(path) -> Network:
    with open(path, "rb") as fh:
        return parse_archive(fh.read())


# ---------------------------------------------------------------- reports

def _print_table(rows: list[list[str]]) -> None:
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    for row in rows:
        cells = [row[0].ljust(widths[0])]
        cells += [cell.rjust(w) for cell, w in zip(row[1:], widths[1:])]
        print("  ".join(cells).rstrip())


def _pct(fraction: float) -> str:
    return f"{100.0 * fraction:.2f}%"


def _positions(net: Network) -> dict[str, int]:
    """Output positions per parameterized layer: conv layers stream their
    filter bank once per output pixel, everything else once per sample."""
    out = {}
    for i, layer in enumerate(net.layers):
        if layer.kind not in PARAM_KINDS:
            continue
        if layer.kind == KIND_CONV:
            _, oh, ow = _out_shape(layer, net.layer_input_shape(i))
            out[layer.name] = oh * ow
        else:
            out[layer.name] = 1
    return out


def _float_macs(net: Network) -> int:
    """Multiply-accumulate count of one float forward pass."""
    total = 0
    positions = _positions(net)
    for i, layer in enumerate(net.layers):
        if layer.kind not in PARAM_KINDS:
            continue
        wshape, _ = _param_shapes(layer, net.layer_input_shape(i))
        fan_in = int(np.prod(wshape[1:]))
        total += wshape[0] * fan_in * positions[layer.name]
    return total


# ---------------------------------------------------------------- commands

def cmd_quantize(args) -> int:
    net = load_network(args.model)
    if any(l.quantized for l in net.parameterized()):
        raise ValueError("model already has quantized layers")
    with open(args.config, "r", encoding="utf-8") as fh:
        cfg = QuantConfig.from_json(fh.read())
    quantized = quantize_network(net, cfg)
    save_network(quantized, args.out)

    hists = {h.name: h for h in weight_stats(quantized)}
    rows = [["layer", "n", "rule", "k", "rho", "nnz", *_HIST_HEADS]]
    for rep in layer_report(quantized):
        rule = cfg.rule_for(net.layer(rep.name))
        rule_text = f"k {rule.k}" if rule.k is not None else f"ratio {rule.ratio}"
        shares = hists[rep.name].fractions()
        rows.append([rep.name, str(rep.n), rule_text, str(rep.k),
                     f"{rep.rho:.6g}", str(rep.nnz),
                     *[_pct(shares[key]) for key in _HIST_KEYS]])
    _print_table(rows)
    skipped = [l.name for l in quantized.parameterized() if not l.quantized]
    if skipped:
        print("left in float:", ", ".join(skipped))
    print(f"wrote {args.out}")
    return EXIT_OK


def _eval_dataset(net: Network, images_path, labels_path) -> tuple[np.ndarray, np.ndarray]:
    ds = load_dataset(images_path, labels_path)
    per_sample = ds.images.shape[1:]
    if int(np.prod(per_sample)) != int(np.prod(net.input_shape)):
        raise ShapeError(f"samples of shape {per_sample} do not fit "
                         f"network input {net.input_shape}")
    return ds.images.reshape((len(ds),) + net.input_shape), ds.labels


def cmd_eval(args) -> int:
    net = load_network(args.model)
    images, labels = _eval_dataset(net, args.images, args.labels)
    accuracy = evaluate(net, (images, labels), args.path)
    print(f"path: {args.path}")
    print(f"samples: {len(labels)}")
    print(f"accuracy: {100.0 * accuracy:.2f}%")
    if args.path == "float":
        macs = _float_macs(net)
        print(f"add/sub per sample: {macs}")
        print(f"multiplications per sample: {macs}")
    else:
        ops = op_report(net)
        print(f"add/sub per sample: {sum(o.addsub for o in ops)}")
        print(f"multiplications per sample: {sum(o.multiplications for o in ops)}")
    return EXIT_OK


def cmd_stats(args) -> int:
    net = load_network(args.model)
    hists = weight_stats(net)

    count_rows = [["layer", "weights", *_HIST_HEADS]]
    buckets = lambda h: (h.zeros, h.ones, h.two_three, h.four_seven, h.others)
    for h in hists:
        count_rows.append([h.name, str(h.total), *[str(c) for c in buckets(h)]])
    totals = [sum(buckets(h)[i] for h in hists) for i in range(5)]
    grand = sum(totals)
    count_rows.append(["total", str(grand), *[str(c) for c in totals]])
    _print_table(count_rows)

    print()
    share_rows = [["layer", *_HIST_HEADS]]
    for h in hists:
        shares = h.fractions()
        share_rows.append([h.name, *[_pct(shares[key]) for key in _HIST_KEYS]])
    share_rows.append(["total", *[_pct(c / grand) for c in totals]])
    _print_table(share_rows)
    return EXIT_OK


def cmd_compress(args) -> int:
    net = load_network(args.model)
    codec = _CODEC_FLAGS[args.codec]
    blob, rows = write_archive(net, codec)

    # A corrupt archive must never be reported as success.
    restored = parse_archive(blob)
    if dump_network(restored) != dump_network(net):
        raise CodecError("verification failed: the archive does not restore the model")

    with open(args.out, "wb") as fh:
        fh.write(blob)

    table = [["layer", "weights", "payload-bits", "bits/weight", "header-bytes"]]
    total_bits = total_n = 0
    for name, n, bits, overhead in rows:
        table.append([name, str(n), str(bits), f"{bits / n:.2f}", str(overhead)])
        total_bits += bits
        total_n += n
    table.append(["total", str(total_n), str(total_bits),
                  f"{total_bits / total_n:.2f}", ""])
    print(f"codec: {codec}")
    _print_table(table)
    print("verify: archive restores the model exactly")
    print(f"wrote {args.out} ({len(blob)} bytes)")
    return EXIT_OK


def cmd_cycles(args) -> int:
    net = load_network(args.model)
    reports = layer_report(net)
    if not reports:
        raise ValueError("network has no quantized layers")
    positions = _positions(net)

    rows = [["layer", "positions", "k", "nnz", "cycles"]]
    total = 0
    for rep in reports:
        point = net.layer(rep.name).params.point
        cycles = estimate_cycles(point, args.arch).cycles * positions[rep.name]
        total += cycles
        rows.append([rep.name, str(positions[rep.name]), str(rep.k),
                     str(rep.nnz), str(cycles)])
    rows.append(["total", "", "", "", str(total)])
    print(f"arch: {args.arch}")
    _print_table(rows)

    print()
    comp = [["layer", "multiplier", "addsub", "ratio"]]
    tm = ta = 0
    for rep in reports:
        point = net.layer(rep.name).params.point
        m = estimate_cycles(point, ARCH_MULTIPLIER).cycles * positions[rep.name]
        a = estimate_cycles(point, ARCH_ADDSUB).cycles * positions[rep.name]
        tm += m
        ta += a
        comp.append([rep.name, str(m), str(a), f"{m / a:.3f}"])
    comp.append(["total", str(tm), str(ta), f"{tm / ta:.3f}"])
    print("multiplier vs addsub (cycles per sample)")
    _print_table(comp)
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pvqnet",
        description="Pyramid-lattice weight quantization toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("quantize", help="quantize a float model")
    p.add_argument("model", help="float model file")
    p.add_argument("config", help="JSON quantization config")
    p.add_argument("out", help="output model file")
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("eval", help="classification accuracy over an IDX dataset")
    p.add_argument("model")
    p.add_argument("images", help="IDX image file")
    p.add_argument("labels", help="IDX label file")
    p.add_argument("--path", choices=("float", "pvq", "binary"), default="float")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("stats", help="weight magnitude histograms")
    p.add_argument("model")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("compress", help="losslessly compress quantized weights")
    p.add_argument("model")
    p.add_argument("out", help="output archive")
    p.add_argument("--codec", choices=sorted(_CODEC_FLAGS), default="golomb")
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("cycles", help="hardware cycle estimates")
    p.add_argument("model")
    p.add_argument("--arch", choices=ARCHITECTURES, default=ARCH_ADDSUB)
    p.set_defaults(func=cmd_cycles)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except IntegerOverflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_OVERFLOW
    except (FormatError, CodecError, StreamError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ShapeError, ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
