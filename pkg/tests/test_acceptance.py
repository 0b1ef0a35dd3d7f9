"""Ten end-to-end acceptance checks, one test (and one pass/fail line) each.

Each check pins a core guarantee of the toolkit: exact lattice
combinatorics, desk-scale encoder optimality, the rank bijection,
multiplication-free inference with exact op counts, scale propagation,
binary-net identities, compression rates on reference weight mixes, the
cycle model, end-to-end accuracy on the shipped fixture model, and the
sparsity floor of ratio-5 quantization.
"""

import time
from fractions import Fraction

import numpy as np
import pytest

from pvqnet.codec import (
    CODEC_INDEX,
    CodecError,
    bits_per_weight,
    decode_coords,
    encode_coords,
    golomb_encode,
    index_decode,
    index_encode,
)
from pvqnet.idx import load_dataset
from pvqnet.kernels import dot_addsub, estimate_cycles
from pvqnet.modelfile import load_network
from pvqnet.network import (
    INTEGER,
    REAL,
    Tensor,
    binary_window_and,
    bsign,
    dequantize_network,
    forward_float,
    forward_pvq,
    op_report,
)
from pvqnet.pvq import (
    PvqPoint,
    count_points,
    encode,
    enumerate_points,
    exhaustive_nearest,
    index_to_point,
    point_to_index,
)
from pvqnet.quantize import QuantConfig, QuantRule, evaluate, quantize_network

from builders import IMAGES_PATH, LABELS_PATH, MODEL_PATH, cosine, fc_net, quantize_all

# Empirical coordinate-magnitude mixes of two ratio-5 quantized layers
# (a 401920-weight fully-connected layer and a 9248-weight conv layer),
# bucketed by |v|: 0, 1, 2..3, 4..7, 8..15.  The expected bits/weight
# figures below follow from the signed exp-Golomb code lengths
# 1/3/5/7/9 for those buckets.
FC_BUCKETS = ((0, 326314), (1, 71184), (2, 4401), (4, 21), (8, 0))
CONV_BUCKETS = ((0, 3342), (1, 3774), (2, 1854), (4, 272), (8, 6))

_RATIO5 = {}


def ratio5_fixture():
    """Fixture model quantized with every fully-connected layer at ratio 5."""
    if "net" not in _RATIO5:
        cfg = QuantConfig(defaults={"fully-connected": QuantRule(ratio=Fraction(5))})
        _RATIO5["float"] = load_network(MODEL_PATH)
        _RATIO5["net"] = quantize_network(_RATIO5["float"], cfg)
    return _RATIO5["float"], _RATIO5["net"]


def fixture_dataset():
    ds = load_dataset(IMAGES_PATH, LABELS_PATH)
    return ds.images.reshape(len(ds), -1), ds.labels


def bucket_layer(rng, buckets):
    """Random layer whose magnitude histogram matches the bucket counts."""
    spans = {0: [0], 1: [1], 2: [2, 3], 4: [4, 5, 6, 7], 8: list(range(8, 16))}
    coords = []
    for lo, count in buckets:
        mags = rng.choice(spans[lo], size=count)
        signs = rng.choice([-1, 1], size=count)
        coords.append(mags * signs)
    coords = np.concatenate(coords)
    rng.shuffle(coords)
    return coords.astype(np.int64)


def test_criterion_01_lattice_count():
    """count_points(8,4) is 2816 and matches full enumeration for all
    n <= 10, k <= 6, in under 10 seconds."""
    start = time.perf_counter()
    assert count_points(8, 4) == 2816
    for n in range(1, 11):
        for k in range(1, 7):
            pts = list(enumerate_points(n, k))
            assert len(pts) == count_points(n, k)
            assert len(set(pts)) == len(pts)
            assert all(sum(abs(c) for c in p) == k for p in pts)
    elapsed = time.perf_counter() - start
    assert elapsed < 10.0, f"enumeration sweep took {elapsed:.1f}s"


def test_criterion_02_encoder_optimality():
    """Over 10,000 random vectors with n <= 6, k <= 5 the encoder's
    cosine equals the exhaustive search's within 1e-12 relative; any
    point mismatch is an exact tie.  Under 60 seconds."""
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    mismatches = 0
    for trial in range(10_000):
        n = int(rng.integers(1, 7))
        k = int(rng.integers(1, 6))
        mode = trial % 4
        if mode == 0:
            y = rng.normal(size=n)
        elif mode == 1:
            y = rng.integers(-3, 4, size=n) + 1e-9 * rng.normal(size=n)
        elif mode == 2:
            y = rng.normal(size=n) * (rng.random(size=n) < 0.6)
        else:
            y = rng.standard_cauchy(size=n)
        if not np.any(y):
            y = np.ones(n)
        got = encode(y, k).point
        want = exhaustive_nearest(y, k)
        c_got = cosine(y, got.coords)
        c_want = cosine(y, want.coords)
        assert c_got == pytest.approx(c_want, rel=1e-12), (
            f"trial {trial}: encode found {got.coords} (cos {c_got!r}), "
            f"exhaustive found {want.coords} (cos {c_want!r}) for y={y.tolist()!r}"
        )
        if got != want:
            mismatches += 1
    elapsed = time.perf_counter() - start
    assert elapsed < 60.0, f"10,000 optimality trials took {elapsed:.1f}s"
    # mismatches are allowed only as exact ties, already asserted above
    assert mismatches <= 10_000


def test_criterion_03_index_bijection():
    """point -> index -> point is the identity over every point of every
    P(n, k) with n <= 10, k <= 6, and the fixed width is exactly
    ceil(log2 of the lattice size).  Under 60 seconds."""
    start = time.perf_counter()
    for n in range(1, 11):
        for k in range(1, 7):
            total = count_points(n, k)
            for rank, coords in enumerate(enumerate_points(n, k)):
                p = PvqPoint(coords, k)
                idx = point_to_index(p)
                assert idx.value == rank
                assert index_to_point(idx) == p
            bits = point_to_index(PvqPoint((k,) + (0,) * (n - 1), k)).bits
            if total == 1:
                assert bits == 0
            else:
                assert (1 << bits) >= total
                assert (1 << (bits - 1)) < total
    elapsed = time.perf_counter() - start
    assert elapsed < 60.0, f"bijection sweep took {elapsed:.1f}s"


def test_criterion_04_multiplication_free_layers():
    """A three-layer quantized net runs forward_pvq with zero in-layer
    multiplications; every dot product spends at most k-1 add/subs on
    weights plus at most one bias addition — exactly, for every seed."""
    for seed in range(20):
        rng = np.random.default_rng(seed)
        k = int(rng.integers(2, 30))
        net = quantize_all(fc_net(rng, (12, 10, 8, 5)), k=k)
        x = rng.integers(-10, 11, size=12)
        out, scale = forward_pvq(net, Tensor(x, INTEGER))
        assert out.kind == INTEGER
        assert scale > 0

        for entry, layer in zip(op_report(net), net.parameterized()):
            assert entry.multiplications == 0
            w = layer.params.weights.data
            b = layer.params.biases.data
            adds = subs = 0
            for row, bias in zip(w, b):
                pulses = int(np.abs(row).sum())
                weight_ops = max(pulses - 1, 0)
                assert weight_ops <= layer.params.k - 1 or pulses == 0
                bias_ops = int(bias != 0 and pulses > 0)
                assert bias_ops <= 1
                first = next((v for v in row if v != 0), bias)
                signs = [1] * int(np.maximum(row, 0).sum()) \
                    + [-1] * int(np.maximum(-row, 0).sum())
                if bias > 0:
                    signs.append(1)
                elif bias < 0:
                    signs.append(-1)
                if signs:
                    lead = 1 if first > 0 else -1
                    signs.remove(lead)
                adds += sum(1 for s in signs if s > 0)
                subs += sum(1 for s in signs if s < 0)
            assert entry.additions == adds, f"seed {seed}, layer {layer.name}"
            assert entry.subtractions == subs, f"seed {seed}, layer {layer.name}"


def test_criterion_05_scale_propagation_equivalence():
    """rho_total times the unscaled integer-path logits equals the float
    logits of the dequantized net within 1e-9 relative, and the argmax
    agrees on 1000 random inputs."""
    rng = np.random.default_rng(505)
    net = quantize_all(fc_net(rng, (16, 12, 10, 6)), k=25)
    deq = dequantize_network(net)
    for _ in range(1000):
        x = rng.normal(size=16)
        ints, scale = forward_pvq(net, Tensor(x, REAL))
        want = forward_float(deq, Tensor(x, REAL)).data
        got = scale * ints.data
        np.testing.assert_allclose(got, want, rtol=1e-9, atol=1e-12)
        assert int(np.argmax(got)) == int(np.argmax(want))


def test_criterion_06_binary_net_identities():
    """bsign(0) is +1; the AND-of-sign-bits pool equals the true max on
    every +/-1 window up to width 4; and the worked seven-coordinate
    weight vectors cost exactly six add/subs against any +/-1 input
    while matching the naive dot product's sign."""
    assert bsign(np.array([0.0]))[0] == 1
    assert bsign(np.array([0]))[0] == 1

    for width in range(1, 5):
        for bits in range(2**width):
            window = np.array([1 if bits & (1 << i) else -1 for i in range(width)])
            assert binary_window_and(window) == window.max()

    vectors = [
        (-2, 1, 0, 0, 2, 2, 0),
        (0, 0, -3, 0, -2, 2, 0),
        (2, -1, 0, 0, -2, -2, 0),  # sign flip of the first
        (0, 2, 2, 0, 0, 1, -2),  # permutation of the first
    ]
    for coords in vectors:
        p = PvqPoint(coords, 7)
        for bits in range(2**7):
            x = np.array([1 if bits & (1 << i) else -1 for i in range(7)],
                         dtype=np.int64)
            value, stats = dot_addsub(p, x)
            assert stats.addsub == 6
            assert stats.multiplications == 0
            naive = int(np.dot(p.to_array(), x))
            assert value == naive
            assert (value >= 0) == (naive >= 0)


def test_criterion_07_compression_numbers():
    """Signed exp-Golomb lands at 1.40 +/- 0.01 bits/weight on the large
    fully-connected magnitude mix and 2.8 +/- 0.1 on the conv mix, and
    every codec round-trips every fixture losslessly (the fixed-width
    rank codec refuses lattices beyond its table guard by contract)."""
    rng = np.random.default_rng(707)

    fc = bucket_layer(rng, FC_BUCKETS)
    stream = golomb_encode(fc)
    assert bits_per_weight(stream, fc.size) == pytest.approx(1.40, abs=0.01)

    conv = bucket_layer(rng, CONV_BUCKETS)
    stream = golomb_encode(conv)
    assert bits_per_weight(stream, conv.size) == pytest.approx(2.8, abs=0.1)

    _, qnet = ratio5_fixture()
    fixtures = [fc, conv] + [l.params.point.to_array()
                             for l in qnet.parameterized()]
    for coords in fixtures:
        n = coords.size
        k = int(np.abs(coords).sum())
        for codec in ("exp-golomb", "rle-zero", "huffman-escape"):
            b = encode_coords(coords, codec)
            assert decode_coords(b) == coords.tolist(), codec
        if n * (k + 1) > 5_000_000:
            with pytest.raises(CodecError, match="rank table"):
                encode_coords(coords, CODEC_INDEX)
        else:
            b = encode_coords(coords, CODEC_INDEX)
            assert decode_coords(b) == coords.tolist()

    # the rank codec is exercised exhaustively where its table fits
    for coords in enumerate_points(6, 4):
        p = PvqPoint(coords, 4)
        assert index_decode(index_encode(p)) == p


def test_criterion_08_cycle_model():
    """Add/sub-architecture cycles equal k for every point whatever its
    support; multiplier cycles equal the nonzero count; the multiplier
    estimate never exceeds the add/sub one."""
    for coords in enumerate_points(6, 5):
        p = PvqPoint(coords, 5)
        assert estimate_cycles(p, "addsub").cycles == 5
        assert estimate_cycles(p, "multiplier").cycles == p.nonzeros
        assert estimate_cycles(p, "multiplier").cycles <= \
            estimate_cycles(p, "addsub").cycles

    rng = np.random.default_rng(808)
    for _ in range(300):
        n = int(rng.integers(1, 50))
        k = int(rng.integers(1, 40))
        coords = np.zeros(n, dtype=np.int64)
        for _ in range(k):
            i = int(rng.integers(n))
            coords[i] += int(rng.choice([-1, 1])) if coords[i] == 0 \
                else int(np.sign(coords[i]))
        p = PvqPoint(coords, k)
        assert estimate_cycles(p, "addsub").cycles == k
        assert estimate_cycles(p, "multiplier").cycles == p.nonzeros
        assert p.nonzeros <= k


def test_criterion_09_end_to_end_accuracy():
    """The shipped MLP fixture scores >= 97% on its test split; ratio-5
    quantization of every fully-connected layer keeps the integer-path
    accuracy within 5 points of the float path, all in under 5 minutes."""
    start = time.perf_counter()
    net = load_network(MODEL_PATH)
    images, labels = fixture_dataset()

    float_acc = evaluate(net, (images, labels), "float")
    assert float_acc >= 0.97, f"fixture float accuracy {float_acc:.4f}"

    cfg = QuantConfig(defaults={"fully-connected": QuantRule(ratio=Fraction(5))})
    qnet = quantize_network(net, cfg)
    assert all(l.quantized for l in qnet.parameterized())

    pvq_acc = evaluate(qnet, (images, labels), "pvq")
    drop = float_acc - pvq_acc
    assert drop <= 0.05, (
        f"float {float_acc:.4f} vs pvq {pvq_acc:.4f}: drop {drop:.4f}"
    )
    elapsed = time.perf_counter() - start
    assert elapsed < 300.0, f"end-to-end run took {elapsed:.1f}s"


def test_criterion_10_sparsity_guarantee():
    """Every ratio-5 quantized layer keeps at least 80% of its
    coordinates at exactly zero."""
    _, qnet = ratio5_fixture()
    checked = 0
    for layer in qnet.parameterized():
        coords = layer.params.point.to_array()
        zero_fraction = float((coords == 0).mean())
        assert zero_fraction >= 0.80, (
            f"{layer.name}: only {100 * zero_fraction:.2f}% zeros"
        )
        # structural floor: nonzeros never exceed the pulse budget
        assert layer.params.point.nonzeros <= layer.params.k
        checked += 1
    assert checked == 3
