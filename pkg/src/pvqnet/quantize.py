"""Post-training weight quantization onto the pyramid lattice.

Each parameterized layer's weights are flattened row-major, the biases
are appended, and the whole vector is encoded as one lattice point with
a per-layer pulse budget k.  k comes either from an explicit value or
from a target ratio N/k held as an exact rational, so configs behave
identically across platforms.

Because the integer path feeds each layer the *unscaled* outputs of the
previous one, the biases are divided by the scale carried into the
layer before encoding; the dequantized network maps them back.  That
keeps rho_total * integer logits equal to the float logits of the
dequantized network.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Mapping

import numpy as np

from . import network as nn
from .network import LayerSpec, Network, QuantizedParams, Tensor, dequantize_network
from .pvq import encode

__all__ = [
    "ConfigError",
    "QuantRule",
    "QuantConfig",
    "WeightHistogram",
    "LayerReport",
    "quantize_layer",
    "quantize_network",
    "layer_report",
    "weight_stats",
    "evaluate",
]


class ConfigError(ValueError):
    """Quantization config does not fit the network."""


@dataclass(frozen=True)
class QuantRule:
    """Pulse budget for one layer: an exact N/k ratio or an explicit k."""

    ratio: Fraction | None = None
    k: int | None = None

    def __post_init__(self) -> None:
        if (self.ratio is None) == (self.k is None):
            raise ConfigError("rule needs exactly one of ratio or k")
        if self.ratio is not None:
            object.__setattr__(self, "ratio", Fraction(self.ratio))
            if self.ratio <= 0:
                raise ConfigError(f"ratio must be positive, got {self.ratio}")
        if self.k is not None and self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")

    def budget(self, n: int) -> int:
        """k for an n-coordinate layer; ratios round half up exactly."""
        if self.k is not None:
            return self.k
        num, den = self.ratio.numerator, self.ratio.denominator
        k = (2 * n * den + num) // (2 * num)
        if k < 1:
            raise ConfigError(f"ratio {self.ratio} gives k = {k} for n = {n}")
        return k


@dataclass(frozen=True)
class QuantConfig:
    """Per-layer rules by name, plus optional defaults by layer kind.

    Layers matched by neither mapping are left untouched; the empty
    config is the identity.
    """

    layers: Mapping[str, QuantRule] = None
    defaults: Mapping[str, QuantRule] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "layers", dict(self.layers or {}))
        object.__setattr__(self, "defaults", dict(self.defaults or {}))
        for kind in self.defaults:
            if kind not in nn.PARAM_KINDS:
                raise ConfigError(f"defaults key {kind!r} is not a parameterized layer kind")

    def rule_for(self, layer: LayerSpec) -> QuantRule | None:
        if layer.name in self.layers:
            return self.layers[layer.name]
        return self.defaults.get(layer.kind)

    @classmethod
    def from_json(cls, text: str) -> "QuantConfig":
        """Parse {"layers": {name: {"ratio": "5/2"} | {"k": 123}}, "defaults": {kind: rule}}."""
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config root must be an object")
        unknown = raw.keys() - {"layers", "defaults"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")

        def parse_rule(obj) -> QuantRule:
            if not isinstance(obj, dict) or len({"ratio", "k"} & obj.keys()) != 1:
                raise ConfigError(f"rule must carry exactly one of 'ratio' or 'k', got {obj!r}")
            if "ratio" in obj:
                try:
                    return QuantRule(ratio=Fraction(str(obj["ratio"])))
                except (ValueError, ZeroDivisionError) as exc:
                    raise ConfigError(f"bad ratio {obj['ratio']!r}: {exc}") from exc
            return QuantRule(k=int(obj["k"]))

        return cls(
            layers={name: parse_rule(r) for name, r in raw.get("layers", {}).items()},
            defaults={kind: parse_rule(r) for kind, r in raw.get("defaults", {}).items()},
        )


def quantize_layer(layer: LayerSpec, k: int, bias_scale: float = 1.0) -> LayerSpec:
    """Quantize one parameterized layer with pulse budget k.

    Steps: pull the float weights and biases, flatten the weights
    row-major and append the biases (divided by bias_scale, the scale
    already carried into this layer on the integer path), encode the
    single vector onto P(N, k), split the point back into weight and
    bias tensors of the original shapes, and swap the parameters.
    """
    if layer.kind not in nn.PARAM_KINDS:
        raise ValueError(f"layer {layer.name or layer.kind} has no parameters to quantize")
    if layer.quantized:
        raise ValueError(f"layer {layer.name} is already quantized")
    if k < 1:
        raise ValueError(f"pulse budget must be >= 1, got {k}")
    if bias_scale <= 0:
        raise ValueError(f"bias scale must be positive, got {bias_scale}")

    w = layer.params.weights.data
    b = layer.params.biases.data
    flat = np.concatenate([w.reshape(-1), b / bias_scale])
    q = encode(flat, k)
    coords = q.point.to_array()
    if q.rho == 0.0:
        coords = np.zeros_like(coords)
    params = QuantizedParams(
        point=q.point,
        rho=q.rho,
        k=k,
        weights=Tensor(coords[: w.size].reshape(w.shape), nn.INTEGER),
        biases=Tensor(coords[w.size:], nn.INTEGER),
    )
    return replace(layer, params=params)


def quantize_network(net: Network, cfg: QuantConfig) -> Network:
    """Apply per-layer quantization, threading the running scale.

    Layers without a matching rule keep their float parameters.  The
    scale carried into each layer is the product of the rhos (and shift
    factors) of the already-quantized layers upstream, reset by bsign;
    it pre-divides the biases so the integer path can add them raw.
    """
    for name in cfg.layers:
        try:
            layer = net.layer(name)
        except KeyError:
            raise ConfigError(f"config names unknown layer {name!r}") from None
        if layer.kind not in nn.PARAM_KINDS:
            raise ConfigError(f"config names layer {name!r} of kind {layer.kind}, which has no weights")

    sigma = 1.0
    layers = []
    for layer in net.layers:
        if layer.kind in nn.PARAM_KINDS:
            rule = cfg.rule_for(layer)
            if rule is not None:
                n = layer.params.weights.size + layer.params.biases.size
                layer = quantize_layer(layer, rule.budget(n), bias_scale=sigma)
                if layer.params.rho > 0:
                    sigma *= layer.params.rho
            sigma *= float(2**layer.shift)
            if layer.activation == nn.ACT_BSIGN:
                sigma = 1.0
        layers.append(layer)
    return Network(tuple(layers), name=net.name)


@dataclass(frozen=True)
class WeightHistogram:
    """Coordinate-magnitude buckets of one quantized layer."""

    name: str
    zeros: int
    ones: int
    two_three: int
    four_seven: int
    others: int

    @property
    def total(self) -> int:
        return self.zeros + self.ones + self.two_three + self.four_seven + self.others

    def fractions(self) -> dict[str, float]:
        t = self.total
        return {
            "0": self.zeros / t,
            "±1": self.ones / t,
            "±2..3": self.two_three / t,
            "±4..7": self.four_seven / t,
            "others": self.others / t,
        }


def point_histogram(name: str, coords: np.ndarray) -> WeightHistogram:
    mags = np.abs(coords)
    return WeightHistogram(
        name=name,
        zeros=int((mags == 0).sum()),
        ones=int((mags == 1).sum()),
        two_three=int(((mags >= 2) & (mags <= 3)).sum()),
        four_seven=int(((mags >= 4) & (mags <= 7)).sum()),
        others=int((mags >= 8).sum()),
    )


def weight_stats(net: Network) -> tuple[WeightHistogram, ...]:
    """Magnitude histogram per quantized layer, in network order."""
    out = []
    for layer in net.parameterized():
        if layer.quantized:
            out.append(point_histogram(layer.name, layer.params.point.to_array()))
    if not out:
        raise ValueError("network has no quantized layers")
    return tuple(out)


@dataclass(frozen=True)
class LayerReport:
    name: str
    kind: str
    n: int
    k: int
    rho: float
    nnz: int


def layer_report(net: Network) -> tuple[LayerReport, ...]:
    """Per quantized layer: coordinate count, budget, scale, support size."""
    out = []
    for layer in net.parameterized():
        if layer.quantized:
            p = layer.params
            out.append(LayerReport(layer.name, layer.kind, p.point.n, p.k,
                                   p.rho, p.point.nonzeros))
    return tuple(out)


PATHS = ("float", "pvq", "binary")

# evaluation batch size bounds the im2col scratch memory
_EVAL_BATCH = 256


def _dataset_arrays(dataset) -> tuple[np.ndarray, np.ndarray]:
    images = getattr(dataset, "images", None)
    labels = getattr(dataset, "labels", None)
    if images is None or labels is None:
        images, labels = dataset
    images = np.asarray(images)
    labels = np.asarray(labels)
    if len(images) != len(labels):
        raise ValueError(f"{len(images)} samples but {len(labels)} labels")
    if len(images) == 0:
        raise ValueError("empty dataset")
    return images, labels


def evaluate(net: Network, dataset, path: str = "float") -> float:
    """Classification accuracy of one inference path over a dataset.

    The float path dequantizes quantized layers first; pvq and binary
    need a fully quantized network.  Logits are read with argmax, which
    is insensitive to the positive pvq output scale, so no final
    multiplication happens anywhere.
    """
    if path not in PATHS:
        raise ValueError(f"unknown path {path!r}, expected one of {PATHS}")
    images, labels = _dataset_arrays(dataset)
    if images.shape[1:] != net.input_shape:
        raise nn.ShapeError(
            f"samples of shape {images.shape[1:]} do not fit input {net.input_shape}"
        )

    integer_samples = np.issubdtype(images.dtype, np.integer)
    if path == "float":
        if any(l.quantized for l in net.parameterized()):
            net = dequantize_network(net)
        runner = lambda batch: nn._float_batch(net, batch.astype(np.float64))
    elif path == "pvq":
        nn._require_quantized(net)
        dtype = np.int64 if integer_samples else np.float64
        runner = lambda batch: nn._pvq_batch(net, batch.astype(dtype))
    else:
        nn._require_quantized(net)
        if not integer_samples:
            raise ValueError("binary path evaluation expects integer samples")
        runner = lambda batch: nn._binary_batch(net, batch.astype(np.int64), False)[0]

    correct = 0
    for start in range(0, len(images), _EVAL_BATCH):
        batch = images[start:start + _EVAL_BATCH]
        logits = runner(batch)
        logits = logits.reshape(len(batch), -1)
        correct += int((np.argmax(logits, axis=1) == labels[start:start + _EVAL_BATCH]).sum())
    return correct / len(images)
