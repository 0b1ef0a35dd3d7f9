"""IDX dataset files: golden byte layout, gzip handling, validation."""

import gzip
import struct

import numpy as np
import pytest

from pvqnet.idx import (
    IMAGES_MAGIC,
    LABELS_MAGIC,
    LabeledDataset,
    load_dataset,
    read_images,
    read_labels,
    write_images,
    write_labels,
)
from pvqnet.modelfile import FormatError


class TestGoldenLayout:
    def test_images_header_is_big_endian(self, tmp_path):
        path = tmp_path / "imgs.idx"
        images = np.arange(12, dtype=np.uint8).reshape(2, 2, 3)
        write_images(path, images)
        raw = path.read_bytes()
        assert raw[:16] == struct.pack(">IIII", 0x803, 2, 2, 3)
        assert raw[16:] == bytes(range(12))

    def test_labels_header_is_big_endian(self, tmp_path):
        path = tmp_path / "labels.idx"
        write_labels(path, np.array([7, 2, 1], dtype=np.uint8))
        assert path.read_bytes() == struct.pack(">II", 0x801, 3) + bytes([7, 2, 1])

    def test_magics(self):
        assert IMAGES_MAGIC == 0x803
        assert LABELS_MAGIC == 0x801


class TestRoundTrip:
    def test_plain_files(self, tmp_path):
        rng = np.random.default_rng(80)
        images = rng.integers(0, 256, size=(5, 4, 4)).astype(np.uint8)
        labels = rng.integers(0, 10, size=5).astype(np.uint8)
        write_images(tmp_path / "i.idx", images)
        write_labels(tmp_path / "l.idx", labels)
        ds = load_dataset(tmp_path / "i.idx", tmp_path / "l.idx")
        np.testing.assert_array_equal(ds.images, images)
        np.testing.assert_array_equal(ds.labels, labels)
        assert len(ds) == 5

    def test_gz_suffix_compresses_and_reads_back(self, tmp_path):
        rng = np.random.default_rng(81)
        images = np.zeros((50, 8, 8), dtype=np.uint8)
        path = tmp_path / "i.idx.gz"
        write_images(path, images)
        blob = path.read_bytes()
        assert blob[:2] == b"\x1f\x8b"  # gzip magic
        assert len(blob) < images.size  # all-zero data compresses
        np.testing.assert_array_equal(read_images(path), images)

    def test_gzip_detected_by_content_not_name(self, tmp_path):
        labels = np.arange(4, dtype=np.uint8)
        raw = struct.pack(">II", LABELS_MAGIC, 4) + labels.tobytes()
        path = tmp_path / "labels.bin"  # no .gz suffix
        path.write_bytes(gzip.compress(raw))
        np.testing.assert_array_equal(read_labels(path), labels)


class TestValidation:
    def test_wrong_magic(self, tmp_path):
        path = tmp_path / "bad.idx"
        path.write_bytes(struct.pack(">II", LABELS_MAGIC, 1) + b"\x05")
        with pytest.raises(FormatError, match="magic"):
            read_images(path)

    def test_truncated_header_and_body(self, tmp_path):
        path = tmp_path / "bad.idx"
        path.write_bytes(b"\x00\x00")
        with pytest.raises(FormatError, match="truncated"):
            read_labels(path)
        path.write_bytes(struct.pack(">II", LABELS_MAGIC, 10) + b"\x01\x02")
        with pytest.raises(FormatError, match="declares 10"):
            read_labels(path)

    def test_write_rejects_out_of_range_values(self, tmp_path):
        with pytest.raises(ValueError, match="unsigned byte"):
            write_labels(tmp_path / "l.idx", np.array([-1, 2]))
        with pytest.raises(ValueError, match="unsigned byte"):
            write_images(tmp_path / "i.idx", np.full((1, 2, 2), 300))
        with pytest.raises(ValueError, match="integers"):
            write_labels(tmp_path / "l.idx", np.array([1.5]))

    def test_write_rejects_wrong_rank(self, tmp_path):
        with pytest.raises(ValueError, match="\\(n, h, w\\)"):
            write_images(tmp_path / "i.idx", np.zeros((2, 2), dtype=np.uint8))
        with pytest.raises(ValueError, match="1-d"):
            write_labels(tmp_path / "l.idx", np.zeros((2, 2), dtype=np.uint8))

    def test_dataset_length_mismatch(self):
        with pytest.raises(FormatError, match="images but"):
            LabeledDataset(np.zeros((3, 2, 2), dtype=np.uint8),
                           np.zeros(2, dtype=np.uint8))

    def test_dataset_type_checks(self):
        with pytest.raises(ValueError, match="uint8"):
            LabeledDataset(np.zeros((3, 2, 2), dtype=np.int64),
                           np.zeros(3, dtype=np.uint8))
