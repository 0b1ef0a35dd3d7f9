"""Model container serialization: round trips and corruption handling."""

import struct

import numpy as np
import pytest

from pvqnet.modelfile import (
    FORMAT_VERSION,
    MAGIC,
    FormatError,
    dump_network,
    load_network,
    parse_network,
    save_network,
)
from pvqnet.network import Network, dropout, fully_connected, input_layer
from pvqnet.quantize import quantize_layer

from builders import bsign_net, conv_net, fc_net, quantize_all


def nets_equal(a, b, f32=True):
    """Structural equality; float tensors compared at 32-bit precision."""
    if len(a.layers) != len(b.layers) or a.name != b.name:
        return False
    for la, lb in zip(a.layers, b.layers):
        if (la.kind, la.name, la.activation, la.shift) != \
           (lb.kind, lb.name, lb.activation, lb.shift):
            return False
        if (la.params is None) != (lb.params is None):
            return False
        if la.params is None:
            continue
        if la.quantized != lb.quantized:
            return False
        if la.quantized:
            if la.params.rho != lb.params.rho or la.params.k != lb.params.k:
                return False
            if la.params.point != lb.params.point:
                return False
        else:
            for ta, tb in ((la.params.weights, lb.params.weights),
                           (la.params.biases, lb.params.biases)):
                da = ta.data.astype(np.float32) if f32 else ta.data
                if not np.array_equal(da, tb.data):
                    return False
    return True


class TestRoundTrip:
    def test_float_net_survives_at_f32_precision(self):
        rng = np.random.default_rng(70)
        net = fc_net(rng, (6, 5, 3))
        back = parse_network(dump_network(net))
        assert nets_equal(net, back)

    def test_dump_is_idempotent(self):
        """Second-generation bytes are identical: parsing loses nothing
        beyond the first 32-bit rounding."""
        rng = np.random.default_rng(71)
        for net in (fc_net(rng, (5, 4, 2)), conv_net(rng),
                    quantize_all(fc_net(rng, (5, 4, 2)), k=9)):
            first = dump_network(net)
            second = dump_network(parse_network(first))
            assert second == first

    def test_quantized_net_round_trips_exactly(self):
        """Integer coordinates and the repr'd rho are lossless."""
        rng = np.random.default_rng(72)
        net = quantize_all(fc_net(rng, (7, 5, 4)), k=13)
        back = parse_network(dump_network(net))
        for orig, parsed in zip(net.parameterized(), back.parameterized()):
            assert parsed.params.rho == orig.params.rho  # bit-exact
            assert parsed.params.point == orig.params.point
            np.testing.assert_array_equal(parsed.params.weights.data,
                                          orig.params.weights.data)

    def test_conv_and_pool_geometry_round_trips(self):
        rng = np.random.default_rng(73)
        net = conv_net(rng)
        back = parse_network(dump_network(net))
        conv = back.layers[1]
        assert (conv.kernel, conv.stride, conv.padding) == ((3, 3), 1, 0)
        assert back.layers[2].pool == 2
        assert back.output_shape == (5,)

    def test_mixed_quantized_and_float_layers(self):
        rng = np.random.default_rng(74)
        net = fc_net(rng, (6, 4, 3))
        layers = list(net.layers)
        layers[1] = quantize_layer(layers[1], 8)
        mixed = Network(tuple(layers))
        back = parse_network(dump_network(mixed))
        assert back.layers[1].quantized
        assert not back.layers[2].quantized

    def test_zero_rho_layer_round_trips(self):
        net = Network((
            input_layer((3,)),
            fully_connected(2, np.zeros((2, 3)), np.zeros(2)),
        ))
        qnet = quantize_all(net, k=5)
        assert qnet.layers[1].params.rho == 0.0
        back = parse_network(dump_network(qnet))
        assert back.layers[1].params.rho == 0.0
        assert not back.layers[1].params.weights.data.any()

    def test_bsign_and_dropout_and_names(self):
        rng = np.random.default_rng(75)
        base = bsign_net(rng, (6, 4, 3))
        layers = list(base.layers) + [dropout(0.25)]
        net = Network(tuple(layers), name="toy classifier")
        back = parse_network(dump_network(net))
        assert back.name == "toy classifier"
        assert back.layers[1].activation == "bsign"
        assert back.layers[-1].rate == 0.25

    def test_save_load_files(self, tmp_path):
        rng = np.random.default_rng(76)
        net = quantize_all(fc_net(rng, (5, 3)), k=6)
        path = tmp_path / "model.pvqnet"
        save_network(net, path)
        assert path.read_bytes()[:8] == MAGIC
        assert nets_equal(load_network(path), parse_network(dump_network(net)))


class TestCorruption:
    def good(self):
        rng = np.random.default_rng(77)
        return dump_network(quantize_all(fc_net(rng, (5, 4, 2)), k=7))

    def mutate_header(self, blob, old, new):
        header_len = struct.unpack_from("<I", blob, 8)[0]
        header = blob[12:12 + header_len].decode()
        assert old in header
        patched = header.replace(old, new).encode()
        return blob[:8] + struct.pack("<I", len(patched)) + patched \
            + blob[12 + header_len:]

    def test_bad_magic(self):
        blob = self.good()
        with pytest.raises(FormatError, match="magic"):
            parse_network(b"NOTMAGIC" + blob[8:])
        with pytest.raises(FormatError, match="too short"):
            parse_network(blob[:6])

    def test_header_length_past_eof(self):
        blob = self.good()
        bad = blob[:8] + struct.pack("<I", len(blob) * 2) + blob[12:]
        with pytest.raises(FormatError, match="header length"):
            parse_network(bad)

    def test_unsupported_version(self):
        blob = self.mutate_header(self.good(), f"pvqnet-model {FORMAT_VERSION}",
                                  "pvqnet-model 99")
        with pytest.raises(FormatError, match="version"):
            parse_network(blob)

    def test_layer_count_mismatch(self):
        blob = self.mutate_header(self.good(), "layers 3", "layers 4")
        with pytest.raises(FormatError, match="declares 4"):
            parse_network(blob)

    def test_unknown_kind_and_activation(self):
        with pytest.raises(FormatError, match="unknown layer kind"):
            parse_network(self.mutate_header(self.good(),
                                             "kind fully-connected", "kind dense"))
        with pytest.raises(FormatError, match="unknown activation"):
            parse_network(self.mutate_header(self.good(),
                                             "activation relu", "activation tanh"))

    def test_missing_and_stray_fields(self):
        with pytest.raises(FormatError, match="missing header field 'units'"):
            parse_network(self.mutate_header(self.good(), "units 4", "depth 4"))

    def test_duplicate_field(self):
        with pytest.raises(FormatError, match="duplicate"):
            parse_network(self.mutate_header(self.good(), "shift 0",
                                             "shift 0\nshift 0"))

    def test_bad_quantized_flag_and_k(self):
        with pytest.raises(FormatError, match="quantized flag"):
            parse_network(self.mutate_header(self.good(), "quantized 1",
                                             "quantized yes"))
        bad_k = self.mutate_header(self.good(), "k 7", "k 0")
        with pytest.raises(FormatError, match="k must be"):
            parse_network(bad_k)

    def test_bad_rho_values(self):
        blob = self.good()
        header_len = struct.unpack_from("<I", blob, 8)[0]
        header = blob[12:12 + header_len].decode()
        rho_line = next(l for l in header.split("\n") if l.startswith("rho "))
        for bad in ("rho nan", "rho -1.0", "rho inf", "rho wide"):
            with pytest.raises(FormatError, match="rho|number"):
                parse_network(self.mutate_header(blob, rho_line, bad))

    def test_truncated_body(self):
        blob = self.good()
        with pytest.raises(FormatError, match="truncated"):
            parse_network(blob[:-3])

    def test_unread_trailing_bytes(self):
        with pytest.raises(FormatError, match="unread"):
            parse_network(self.good() + b"\x00\x00")

    def test_coordinates_must_match_rho_and_k(self):
        blob = self.good()
        # flip one stored coordinate: the point no longer sums to k
        body = bytearray(blob)
        header_len = struct.unpack_from("<I", blob, 8)[0]
        start = 12 + header_len
        flat = np.frombuffer(blob[start:start + 4 * 24], dtype="<i4").copy()
        flat[0] += 1
        body[start:start + 4 * 24] = flat.astype("<i4").tobytes()
        with pytest.raises(FormatError):
            parse_network(bytes(body))

    def test_header_not_utf8(self):
        blob = self.good()
        bad = blob[:12] + b"\xff\xfe" + blob[14:]
        with pytest.raises(FormatError, match="UTF-8|magic|header"):
            parse_network(bad)

    def test_first_layer_must_be_input(self):
        blob = self.mutate_header(self.good(), "kind input", "kind maxpool")
        with pytest.raises(FormatError):
            parse_network(blob)
