"""Layer-graph model of feed-forward/conv nets with three inference paths.

Paths:

* float: the plain reference pass over float parameters.
* pvq: all parameterized layers hold lattice points; every dot product
  is integer adds/subs, no scale is applied anywhere inside the net, and
  the single combined scale (the product of the per-layer rhos) comes
  back with the logits.  Positively homogeneous activations make this
  exact: relu(s*x) = s*relu(x) and window max commutes with s >= 0.
* binary: bsign activations absorb every positive scale, so the rhos
  are dropped entirely and activations stay in {+1, -1}.

Tensors and layers are immutable; forward passes are pure functions, so
networks can be shared across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .kernels import IntegerOverflowError
from .pvq import PvqPoint

__all__ = [
    "Tensor",
    "FloatParams",
    "QuantizedParams",
    "LayerSpec",
    "Network",
    "LayerOps",
    "ShapeError",
    "KIND_INPUT",
    "KIND_FC",
    "KIND_CONV",
    "KIND_MAXPOOL",
    "KIND_DROPOUT",
    "PARAM_KINDS",
    "ACT_RELU",
    "ACT_BSIGN",
    "ACT_NONE",
    "ACTIVATIONS",
    "REAL",
    "INTEGER",
    "BINARY",
    "input_layer",
    "fully_connected",
    "conv2d",
    "maxpool",
    "dropout",
    "forward_float",
    "forward_pvq",
    "forward_binary",
    "dequantize_network",
    "op_report",
    "bsign",
    "binary_window_and",
]

KIND_INPUT = "input"
KIND_FC = "fully-connected"
KIND_CONV = "conv2d"
KIND_MAXPOOL = "maxpool"
KIND_DROPOUT = "dropout"
PARAM_KINDS = (KIND_FC, KIND_CONV)

ACT_RELU = "relu"
ACT_BSIGN = "bsign"
ACT_NONE = "none"
ACTIVATIONS = (ACT_RELU, ACT_BSIGN, ACT_NONE)

REAL = "real"
INTEGER = "integer"
BINARY = "binary"

# float64 sums of integers stay exact strictly below 2^53
_EXACT_F64 = 2**53
_INT64_LIMIT = 2**63 - 1


class ShapeError(ValueError):
    """Layer geometry or tensor shape mismatch."""


@dataclass(frozen=True)
class Tensor:
    """Shaped row-major array of reals, integers, or +/-1 values."""

    data: np.ndarray
    kind: str

    def __post_init__(self) -> None:
        if self.kind not in (REAL, INTEGER, BINARY):
            raise ValueError(f"unknown tensor kind {self.kind!r}")
        dtype = np.float64 if self.kind == REAL else np.int64
        data = np.ascontiguousarray(self.data, dtype=dtype)
        if self.kind == REAL and not np.all(np.isfinite(data)):
            raise ValueError("real tensor contains non-finite values")
        if self.kind == BINARY and not np.all(np.abs(data) == 1):
            raise ValueError("binary tensor may only hold +1 and -1")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @classmethod
    def of(cls, values, kind: str | None = None) -> "Tensor":
        arr = np.asarray(values)
        if kind is None:
            kind = INTEGER if np.issubdtype(arr.dtype, np.integer) else REAL
        return cls(arr, kind)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def ravel(self) -> np.ndarray:
        return self.data.reshape(-1)


@dataclass(frozen=True)
class FloatParams:
    weights: Tensor
    biases: Tensor

    def __post_init__(self) -> None:
        if self.weights.kind != REAL or self.biases.kind != REAL:
            raise ValueError("float params must hold real tensors")
        if self.biases.data.ndim != 1:
            raise ShapeError("biases must be a vector")


@dataclass(frozen=True)
class QuantizedParams:
    """A whole layer's weights+biases as one lattice point, split back out.

    The flat point coordinates are the row-major weights followed by the
    biases; rho maps the integers back to real space.  rho == 0 encodes
    an all-zero layer (the stored point is then the conventional one and
    the split tensors are all zeros).
    """

    point: PvqPoint
    rho: float
    k: int
    weights: Tensor
    biases: Tensor

    def __post_init__(self) -> None:
        if self.weights.kind != INTEGER or self.biases.kind != INTEGER:
            raise ValueError("quantized params must hold integer tensors")
        if self.biases.data.ndim != 1:
            raise ShapeError("biases must be a vector")
        if self.k != self.point.k:
            raise ValueError(f"k {self.k} disagrees with the point's {self.point.k}")
        if self.rho < 0 or not math.isfinite(self.rho):
            raise ValueError(f"rho must be finite and non-negative, got {self.rho}")
        flat = tuple(self.weights.ravel().tolist()) + tuple(self.biases.ravel().tolist())
        expected = self.point.coords if self.rho > 0 else (0,) * self.point.n
        if flat != expected:
            raise ValueError("weight/bias split does not match the point coordinates")


@dataclass(frozen=True)
class LayerSpec:
    """One layer; geometry fields are meaningful per kind.

    shift is an optional power-of-two downshift applied to integer
    activations after the activation function on the pvq path; it
    contributes a factor 2^shift to the combined output scale.
    """

    kind: str
    name: str = ""
    activation: str = ACT_NONE
    units: int | None = None
    kernel: tuple[int, int] | None = None
    out_channels: int | None = None
    stride: int = 1
    padding: int = 0
    pool: int | None = None
    pool_stride: int | None = None
    rate: float | None = None
    shape: tuple[int, ...] | None = None
    shift: int = 0
    params: FloatParams | QuantizedParams | None = None

    def __post_init__(self) -> None:
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.shift < 0:
            raise ValueError("shift must be non-negative")
        if self.shift and self.activation == ACT_BSIGN:
            raise ValueError("a downshift after bsign would destroy the +/-1 range")
        if self.kind == KIND_INPUT:
            if not self.shape or any(s < 1 for s in self.shape):
                raise ShapeError("input layer needs a positive shape")
        elif self.kind == KIND_FC:
            if not self.units or self.units < 1:
                raise ShapeError("fully-connected layer needs units >= 1")
        elif self.kind == KIND_CONV:
            if not self.kernel or not self.out_channels:
                raise ShapeError("conv2d layer needs kernel and out_channels")
            if self.stride < 1 or self.padding < 0:
                raise ShapeError("conv2d stride must be >= 1 and padding >= 0")
        elif self.kind == KIND_MAXPOOL:
            if not self.pool or self.pool < 1:
                raise ShapeError("maxpool layer needs pool >= 1")
        elif self.kind == KIND_DROPOUT:
            if self.rate is None or not 0.0 <= self.rate < 1.0:
                raise ValueError("dropout rate must be in [0, 1)")
        else:
            raise ValueError(f"unknown layer kind {self.kind!r}")

    @property
    def quantized(self) -> bool:
        return isinstance(self.params, QuantizedParams)


def input_layer(shape, name: str = "") -> LayerSpec:
    return LayerSpec(KIND_INPUT, name=name, shape=tuple(int(s) for s in shape))


def fully_connected(units, weights, biases, activation=ACT_NONE, name="", shift=0) -> LayerSpec:
    params = FloatParams(Tensor.of(weights, REAL), Tensor.of(biases, REAL))
    return LayerSpec(KIND_FC, name=name, activation=activation, units=int(units),
                     shift=shift, params=params)


def conv2d(out_channels, kernel, weights, biases, activation=ACT_NONE,
           stride=1, padding=0, name="", shift=0) -> LayerSpec:
    params = FloatParams(Tensor.of(weights, REAL), Tensor.of(biases, REAL))
    return LayerSpec(KIND_CONV, name=name, activation=activation,
                     out_channels=int(out_channels), kernel=(int(kernel[0]), int(kernel[1])),
                     stride=stride, padding=padding, shift=shift, params=params)


def maxpool(pool, stride=None, name="") -> LayerSpec:
    return LayerSpec(KIND_MAXPOOL, name=name, pool=int(pool),
                     pool_stride=None if stride is None else int(stride))


def dropout(rate, name="") -> LayerSpec:
    return LayerSpec(KIND_DROPOUT, name=name, rate=float(rate))


_NAME_PREFIX = {
    KIND_INPUT: "IN",
    KIND_FC: "FC",
    KIND_CONV: "CONV",
    KIND_MAXPOOL: "MAX",
    KIND_DROPOUT: "DRP",
}


def _out_shape(layer: LayerSpec, in_shape: tuple[int, ...]) -> tuple[int, ...]:
    if layer.kind == KIND_FC:
        return (layer.units,)
    if layer.kind == KIND_CONV:
        if len(in_shape) != 3:
            raise ShapeError(f"conv2d {layer.name} needs (channels, h, w) input, got {in_shape}")
        c, h, w = in_shape
        kh, kw = layer.kernel
        oh = (h + 2 * layer.padding - kh) // layer.stride + 1
        ow = (w + 2 * layer.padding - kw) // layer.stride + 1
        if oh < 1 or ow < 1:
            raise ShapeError(f"conv2d {layer.name} kernel {layer.kernel} exceeds input {in_shape}")
        return (layer.out_channels, oh, ow)
    if layer.kind == KIND_MAXPOOL:
        if len(in_shape) != 3:
            raise ShapeError(f"maxpool {layer.name} needs (channels, h, w) input, got {in_shape}")
        c, h, w = in_shape
        stride = layer.pool_stride or layer.pool
        oh = (h - layer.pool) // stride + 1
        ow = (w - layer.pool) // stride + 1
        if oh < 1 or ow < 1:
            raise ShapeError(f"maxpool {layer.name} window {layer.pool} exceeds input {in_shape}")
        return (c, oh, ow)
    return in_shape


def _param_shapes(layer: LayerSpec, in_shape: tuple[int, ...]) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Expected (weights, biases) shapes: FC rows are output units over the
    flattened input; conv filters are (out_ch, in_ch, kh, kw)."""
    if layer.kind == KIND_FC:
        fan_in = int(np.prod(in_shape))
        return (layer.units, fan_in), (layer.units,)
    c = in_shape[0]
    kh, kw = layer.kernel
    return (layer.out_channels, c, kh, kw), (layer.out_channels,)


@dataclass(frozen=True)
class Network:
    layers: tuple[LayerSpec, ...]
    name: str = ""

    def __post_init__(self) -> None:
        layers = tuple(self.layers)
        if not layers:
            raise ShapeError("network needs at least an input layer")
        if layers[0].kind != KIND_INPUT:
            raise ShapeError("the first layer must be the input layer")
        if any(l.kind == KIND_INPUT for l in layers[1:]):
            raise ShapeError("only one input layer is allowed")

        counters: dict[str, int] = {}
        named = []
        for layer in layers:
            prefix = _NAME_PREFIX[layer.kind]
            seq = counters.get(prefix, 0)
            counters[prefix] = seq + 1
            named.append(layer if layer.name else replace(layer, name=f"{prefix}{seq}"))
        seen = set()
        for layer in named:
            if layer.name in seen:
                raise ValueError(f"duplicate layer name {layer.name!r}")
            seen.add(layer.name)

        shapes = [named[0].shape]
        for layer in named[1:]:
            in_shape = shapes[-1]
            if layer.kind in PARAM_KINDS:
                if layer.params is None:
                    raise ShapeError(f"layer {layer.name} has no parameters")
                wshape, bshape = _param_shapes(layer, in_shape)
                if layer.params.weights.shape != wshape or layer.params.biases.shape != bshape:
                    raise ShapeError(
                        f"layer {layer.name} expects weights {wshape} and biases {bshape}, "
                        f"got {layer.params.weights.shape} and {layer.params.biases.shape}"
                    )
            shapes.append(_out_shape(layer, in_shape))

        object.__setattr__(self, "layers", tuple(named))
        object.__setattr__(self, "_shapes", tuple(shapes))

    @property
    def input_shape(self) -> tuple[int, ...]:
        return self.layers[0].shape

    @property
    def output_shape(self) -> tuple[int, ...]:
        return self._shapes[-1]

    def layer_input_shape(self, index: int) -> tuple[int, ...]:
        return self._shapes[index - 1] if index else self.layers[0].shape

    def layer(self, name: str) -> LayerSpec:
        for layer in self.layers:
            if layer.name == name:
                return layer
        raise KeyError(f"no layer named {name!r}")

    def parameterized(self) -> tuple[LayerSpec, ...]:
        return tuple(l for l in self.layers if l.kind in PARAM_KINDS)


def bsign(x: np.ndarray) -> np.ndarray:
    """Binary sign: +1 for x >= 0, -1 for x < 0.  Zero maps to +1."""
    return np.where(np.asarray(x) >= 0, 1, -1).astype(np.int64)


def binary_window_and(window: np.ndarray) -> int:
    """Max over a +/-1 window computed as a bitwise AND of sign bits.

    Under the bit convention 0 <-> +1 and 1 <-> -1, the AND of all bits
    is 1 exactly when every activation is -1, which is exactly when the
    max is -1.
    """
    bits = (np.asarray(window).reshape(-1) < 0).astype(np.uint8)
    out = np.bitwise_and.reduce(bits)
    return 1 - 2 * int(out)


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, padding: int) -> tuple[np.ndarray, int, int]:
    """Gather conv patches: (batch, positions, c*kh*kw), plus the output h/w.

    The per-patch flattening order (channel, kh, kw) matches the
    row-major filter layout, so a conv becomes one matrix product.
    """
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    windows = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride, :, :]
    b, c, oh, ow = windows.shape[:4]
    patches = windows.transpose(0, 2, 3, 1, 4, 5).reshape(b, oh * ow, c * kh * kw)
    return patches, oh, ow


def _pool_windows(x: np.ndarray, pool: int, stride: int) -> np.ndarray:
    windows = np.lib.stride_tricks.sliding_window_view(x, (pool, pool), axis=(2, 3))
    return windows[:, :, ::stride, ::stride, :, :]


def _int_matmul(a: np.ndarray, w_t: np.ndarray, biases: np.ndarray, layer_name: str) -> np.ndarray:
    """Exact integer a @ w_t + biases with 64-bit overflow detection.

    While every partial sum fits under 2^53 a float64 product is exact
    and fast; up to the int64 limit the product falls back to Python
    integers; beyond that the layer reports overflow.
    """
    amax = int(np.abs(a).max()) if a.size else 0
    l1 = int(np.abs(w_t).sum(axis=0).max()) if w_t.size else 0
    bmax = int(np.abs(biases).max()) if biases.size else 0
    bound = amax * l1 + bmax
    if bound < _EXACT_F64:
        out = a.astype(np.float64) @ w_t.astype(np.float64) + biases
        return out.astype(np.int64)
    if bound <= _INT64_LIMIT:
        out = a.astype(object) @ w_t.astype(object) + biases
        return out.astype(np.int64)
    raise IntegerOverflowError(
        f"layer {layer_name}: accumulating up to {bound} exceeds the signed 64-bit range"
    )


def _check_input(net: Network, x: Tensor) -> np.ndarray:
    if x.shape != net.input_shape:
        raise ShapeError(f"input shape {x.shape} does not match network input {net.input_shape}")
    return x.data[np.newaxis]


def _float_batch(net: Network, x: np.ndarray) -> np.ndarray:
    for layer in net.layers[1:]:
        if layer.kind in PARAM_KINDS:
            if layer.quantized:
                raise ValueError(f"quantized layer {layer.name} present; use the pvq path")
            w = layer.params.weights.data
            b = layer.params.biases.data
            if layer.kind == KIND_FC:
                x = x.reshape(x.shape[0], -1) @ w.T + b
            else:
                patches, oh, ow = _im2col(x, *layer.kernel, layer.stride, layer.padding)
                z = patches @ w.reshape(layer.out_channels, -1).T + b
                x = z.transpose(0, 2, 1).reshape(x.shape[0], layer.out_channels, oh, ow)
            if layer.activation == ACT_RELU:
                x = np.maximum(x, 0.0)
            elif layer.activation == ACT_BSIGN:
                raise ValueError(f"layer {layer.name}: bsign belongs to the binary path")
            if layer.shift:
                x = x / float(2**layer.shift)
        elif layer.kind == KIND_MAXPOOL:
            stride = layer.pool_stride or layer.pool
            x = _pool_windows(x, layer.pool, stride).max(axis=(4, 5))
        # dropout is an inference-time identity
    return x


def forward_float(net: Network, x: Tensor) -> Tensor:
    """Reference float pass.  Requires float parameters everywhere."""
    out = _float_batch(net, _check_input(net, x).astype(np.float64))
    return Tensor(out[0], REAL)


def _require_quantized(net: Network) -> None:
    for layer in net.parameterized():
        if not layer.quantized:
            raise ValueError(f"layer {layer.name} is not quantized")


def _pvq_scale(net: Network) -> float:
    """Combined output scale: product of the positive per-layer rhos and
    the power-of-two shift factors.  A rho of zero means that layer
    produced exact integer zeros, which later layers consume as-is, so
    it contributes no factor."""
    scale = 1.0
    for layer in net.parameterized():
        if layer.params.rho > 0:
            scale *= layer.params.rho
        scale *= float(2**layer.shift)
    return scale


def _pvq_batch(net: Network, x: np.ndarray) -> np.ndarray:
    integer = np.issubdtype(x.dtype, np.integer)
    for layer in net.layers[1:]:
        if layer.kind in PARAM_KINDS:
            w = layer.params.weights.data
            b = layer.params.biases.data
            if layer.kind == KIND_FC:
                flat = x.reshape(x.shape[0], -1)
                if integer:
                    x = _int_matmul(flat, w.T, b, layer.name)
                else:
                    x = flat @ w.T.astype(np.float64) + b
            else:
                patches, oh, ow = _im2col(x, *layer.kernel, layer.stride, layer.padding)
                wmat = w.reshape(layer.out_channels, -1)
                if integer:
                    p2 = patches.reshape(-1, patches.shape[2])
                    z = _int_matmul(p2, wmat.T, b, layer.name)
                    z = z.reshape(patches.shape[0], patches.shape[1], -1)
                else:
                    z = patches @ wmat.T.astype(np.float64) + b
                x = z.transpose(0, 2, 1).reshape(z.shape[0], layer.out_channels, oh, ow)
            if layer.activation == ACT_RELU:
                x = np.maximum(x, 0)
            elif layer.activation == ACT_BSIGN:
                raise ValueError(f"layer {layer.name}: bsign belongs to the binary path")
            if layer.shift:
                x = x >> layer.shift if integer else x / float(2**layer.shift)
        elif layer.kind == KIND_MAXPOOL:
            stride = layer.pool_stride or layer.pool
            x = _pool_windows(x, layer.pool, stride).max(axis=(4, 5))
    return x


def forward_pvq(net: Network, x: Tensor) -> tuple[Tensor, float]:
    """Integer-path pass over quantized layers.

    No scale is multiplied anywhere inside the network; the returned
    rho_total satisfies rho_total * logits == float logits of the
    dequantized network (exactly for integer inputs, up to float
    rounding otherwise).  Integer inputs keep every activation integer.
    """
    _require_quantized(net)
    if x.kind == BINARY:
        raise ValueError("binary inputs belong to the binary path")
    batch = _check_input(net, x)
    out = _pvq_batch(net, batch)
    kind = INTEGER if np.issubdtype(out.dtype, np.integer) else REAL
    return Tensor(out[0], kind), _pvq_scale(net)


def _binary_batch(net: Network, x: np.ndarray, is_binary: bool) -> tuple[np.ndarray, bool]:
    last_param = max(i for i, l in enumerate(net.layers) if l.kind in PARAM_KINDS)
    for idx, layer in enumerate(net.layers[1:], start=1):
        if layer.kind in PARAM_KINDS:
            if layer.activation == ACT_NONE and idx != last_param:
                raise ValueError(f"layer {layer.name}: hidden layers need bsign on the binary path")
            if layer.activation == ACT_RELU:
                raise ValueError(f"layer {layer.name}: relu is not a binary activation")
            w = layer.params.weights.data
            b = layer.params.biases.data
            if layer.kind == KIND_FC:
                x = _int_matmul(x.reshape(x.shape[0], -1), w.T, b, layer.name)
            else:
                patches, oh, ow = _im2col(x, *layer.kernel, layer.stride, layer.padding)
                z = _int_matmul(patches.reshape(-1, patches.shape[2]),
                                w.reshape(layer.out_channels, -1).T, b, layer.name)
                z = z.reshape(patches.shape[0], patches.shape[1], -1)
                x = z.transpose(0, 2, 1).reshape(z.shape[0], layer.out_channels, oh, ow)
            is_binary = layer.activation == ACT_BSIGN
            if is_binary:
                x = bsign(x)
            if layer.shift:
                x = x >> layer.shift
        elif layer.kind == KIND_MAXPOOL:
            if not is_binary:
                raise ValueError(f"layer {layer.name}: binary maxpool needs +/-1 activations")
            # max over +/-1 windows, computed on the sign bits as an AND
            stride = layer.pool_stride or layer.pool
            windows = _pool_windows(x, layer.pool, stride)
            bits = (windows < 0).astype(np.uint8)
            anded = np.bitwise_and.reduce(bits.reshape(*bits.shape[:4], -1), axis=4)
            x = 1 - 2 * anded.astype(np.int64)
    return x, is_binary


def forward_binary(net: Network, x: Tensor) -> Tensor:
    """Binary pass: every scale is absorbed by bsign and dropped.

    Hidden parameterized layers must use bsign; the last parameterized
    layer may instead use 'none', in which case the raw integer
    accumulators come back (the usual argmax head).  Inputs may be
    integer (first layer accumulates them directly) or binary.
    """
    _require_quantized(net)
    if not any(l.kind in PARAM_KINDS for l in net.layers):
        raise ValueError("binary path needs at least one parameterized layer")
    if x.kind == REAL:
        raise ValueError("binary path takes integer or binary inputs")
    out, is_binary = _binary_batch(net, _check_input(net, x), x.kind == BINARY)
    return Tensor(out[0], BINARY if is_binary else INTEGER)


def incoming_scales(net: Network) -> list[float]:
    """Float-side scale sitting on each layer's input when the pvq pass
    runs unscaled.  Quantized layers multiply it by their rho (zero rho
    layers contribute nothing: their integer output is exactly zero) and
    by 2^shift; bsign absorbs any positive scale and resets it to 1."""
    sigma = 1.0
    scales = []
    for layer in net.layers:
        scales.append(sigma)
        if layer.kind in PARAM_KINDS:
            if layer.quantized:
                rho = layer.params.rho
                if rho > 0:
                    sigma *= rho
            sigma *= float(2**layer.shift)
            if layer.activation == ACT_BSIGN:
                sigma = 1.0
    return scales


def dequantize_network(net: Network) -> Network:
    """Float network equivalent to the pvq pass up to one final scale.

    Weights become rho * point coordinates.  Stored integer biases live
    in each layer's unscaled integer domain, so they are mapped back
    with rho times the scale carried into the layer.
    """
    scales = incoming_scales(net)
    layers = []
    for idx, layer in enumerate(net.layers):
        if layer.kind in PARAM_KINDS and layer.quantized:
            p = layer.params
            weights = Tensor(p.rho * p.weights.data.astype(np.float64), REAL)
            biases = Tensor(p.rho * scales[idx] * p.biases.data.astype(np.float64), REAL)
            layers.append(replace(layer, params=FloatParams(weights, biases)))
        else:
            layers.append(layer)
    return Network(tuple(layers), name=net.name)


@dataclass(frozen=True)
class LayerOps:
    """Per-sample operation tally of one layer on the pvq/binary path."""

    name: str
    dots: int
    additions: int
    subtractions: int
    multiplications: int = 0

    @property
    def addsub(self) -> int:
        return self.additions + self.subtractions


def _row_ops(w: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exact add/sub counts per output row for the repeated-add kernel.

    Loading the first operand is free; each remaining pulse is one add
    or sub by its sign; a nonzero bias costs one more unless the row had
    no pulses at all (then the bias itself is the first load).
    """
    pos = np.maximum(w, 0).sum(axis=1)
    neg = np.maximum(-w, 0).sum(axis=1)
    nz = w != 0
    has = nz.any(axis=1)
    first = np.where(has, np.argmax(nz, axis=1), 0)
    first_sign = np.sign(w[np.arange(w.shape[0]), first]) * has
    adds = pos - (first_sign > 0) + ((b > 0) & has)
    subs = neg - (first_sign < 0) + ((b < 0) & has)
    return adds, subs


def op_report(net: Network) -> tuple[LayerOps, ...]:
    """Structural per-sample op counts for the add/sub inference paths.

    Counts depend only on the stored points, not on the data: dots is
    the number of output values a sample produces in that layer, and the
    add/sub totals mirror the repeated-add kernel exactly.
    """
    _require_quantized(net)
    report = []
    for idx, layer in enumerate(net.layers):
        if layer.kind not in PARAM_KINDS:
            continue
        w = layer.params.weights.data
        b = layer.params.biases.data
        rows = w.reshape(w.shape[0], -1)
        adds, subs = _row_ops(rows, b)
        if layer.kind == KIND_FC:
            positions = 1
        else:
            oh, ow = _out_shape(layer, net.layer_input_shape(idx))[1:]
            positions = oh * ow
        report.append(LayerOps(
            name=layer.name,
            dots=int(rows.shape[0]) * positions,
            additions=int(adds.sum()) * positions,
            subtractions=int(subs.sum()) * positions,
        ))
    return tuple(report)
