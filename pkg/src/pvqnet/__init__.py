"""Pyramid-lattice weight quantization for neural networks.

Weights are snapped to integer points with a fixed total pulse count, so
inference needs only additions and subtractions; the integer points also
compress well.  See the README for the pipeline walk-through.
"""

from .codec import (
    CODEC_GOLOMB,
    CODEC_HUFFMAN,
    CODEC_INDEX,
    CODEC_RLE,
    CODECS,
    Bitstream,
    CodecError,
    bits_per_weight,
    decode_coords,
    encode_coords,
    golomb_decode,
    golomb_encode,
    huffman_decode,
    huffman_encode,
    index_decode,
    index_encode,
    read_container,
    rle_decode,
    rle_encode,
    write_container,
)
from .idx import LabeledDataset, load_dataset, read_images, read_labels
from .kernels import (
    ARCH_ADDSUB,
    ARCH_BINARY_ACCUMULATE,
    ARCH_BINARY_COUNTER,
    ARCH_MULTIPLIER,
    ARCHITECTURES,
    CycleEstimate,
    DotStats,
    IntegerOverflowError,
    dot_addsub,
    dot_quantized,
    dot_reference,
    estimate_cycles,
)
from .modelfile import FormatError, dump_network, load_network, parse_network, save_network
from .network import (
    ACT_BSIGN,
    ACT_NONE,
    ACT_RELU,
    KIND_CONV,
    KIND_DROPOUT,
    KIND_FC,
    KIND_INPUT,
    KIND_MAXPOOL,
    LayerSpec,
    Network,
    ShapeError,
    Tensor,
    bsign,
    conv2d,
    dequantize_network,
    dropout,
    forward_binary,
    forward_float,
    forward_pvq,
    fully_connected,
    input_layer,
    maxpool,
    op_report,
)
from .pvq import (
    PointIndex,
    PvqPoint,
    QuantizedVector,
    count_points,
    encode,
    enumerate_points,
    exhaustive_nearest,
    index_to_point,
    point_to_index,
)
from .quantize import (
    ConfigError,
    QuantConfig,
    QuantRule,
    WeightHistogram,
    evaluate,
    layer_report,
    point_histogram,
    quantize_layer,
    quantize_network,
    weight_stats,
)

__all__ = [
    # lattice
    "PvqPoint", "QuantizedVector", "PointIndex", "count_points", "encode",
    "enumerate_points", "exhaustive_nearest", "point_to_index", "index_to_point",
    # kernels
    "ARCH_MULTIPLIER", "ARCH_ADDSUB", "ARCH_BINARY_ACCUMULATE", "ARCH_BINARY_COUNTER",
    "ARCHITECTURES", "DotStats", "CycleEstimate", "IntegerOverflowError",
    "dot_reference", "dot_addsub", "dot_quantized", "estimate_cycles",
    # network
    "KIND_INPUT", "KIND_FC", "KIND_CONV", "KIND_MAXPOOL", "KIND_DROPOUT",
    "ACT_RELU", "ACT_BSIGN", "ACT_NONE", "Tensor", "LayerSpec", "Network",
    "ShapeError", "input_layer", "fully_connected", "conv2d", "maxpool", "dropout",
    "forward_float", "forward_pvq", "forward_binary", "dequantize_network",
    "op_report", "bsign",
    # quantization
    "ConfigError", "QuantRule", "QuantConfig", "WeightHistogram",
    "quantize_layer", "quantize_network", "layer_report", "weight_stats",
    "point_histogram", "evaluate",
    # codecs
    "CODEC_GOLOMB", "CODEC_RLE", "CODEC_HUFFMAN", "CODEC_INDEX", "CODECS",
    "Bitstream", "CodecError", "bits_per_weight", "encode_coords", "decode_coords",
    "golomb_encode", "golomb_decode", "rle_encode", "rle_decode",
    "huffman_encode", "huffman_decode", "index_encode", "index_decode",
    "write_container", "read_container",
    # model and dataset files
    "FormatError", "dump_network", "parse_network", "save_network", "load_network",
    "LabeledDataset", "load_dataset", "read_images", "read_labels",
    "__version__",
]

__version__ = "0.1.0"
