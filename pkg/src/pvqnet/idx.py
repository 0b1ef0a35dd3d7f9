"""IDX image/label files (the classic digit-dataset layout), gzip-aware."""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass

import numpy as np

from .modelfile import FormatError

__all__ = [
    "IMAGES_MAGIC",
    "LABELS_MAGIC",
    "LabeledDataset",
    "read_images",
    "read_labels",
    "load_dataset",
    "write_images",
    "write_labels",
]

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class LabeledDataset:
    """Images (n, h, w) with one unsigned-byte label per image."""

    images: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        if self.images.ndim != 3 or self.images.dtype != np.uint8:
            raise ValueError("images must be a (n, h, w) uint8 array")
        if self.labels.ndim != 1 or self.labels.dtype != np.uint8:
            raise ValueError("labels must be a 1-d uint8 array")
        if len(self.images) != len(self.labels):
            raise FormatError(f"{len(self.images)} images but "
                              f"{len(self.labels)} labels")

    def __len__(self) -> int:
        return len(self.images)


def _read_raw(path) -> bytes:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] == b"\x1f\x8b":
        data = gzip.decompress(data)
    return data


def _parse_idx(data: bytes, magic: int, ndim: int, path) -> np.ndarray:
    head = 4 + 4 * ndim
    if len(data) < head:
        raise FormatError(f"{path}: truncated IDX header")
    (got,) = struct.unpack_from(">I", data, 0)
    if got != magic:
        raise FormatError(f"{path}: IDX magic 0x{got:08x}, expected 0x{magic:08x}")
    dims = struct.unpack_from(f">{ndim}I", data, 4)
    count = int(np.prod(dims))
    if len(data) != head + count:
        raise FormatError(f"{path}: IDX declares {count} bytes of data, "
                          f"file holds {len(data) - head}")
    return np.frombuffer(data, dtype=np.uint8, offset=head).reshape(dims)


def read_images(path) -> np.ndarray:
    return _parse_idx(_read_raw(path), IMAGES_MAGIC, 3, path)


def read_labels(path) -> np.ndarray:
    return _parse_idx(_read_raw(path), LABELS_MAGIC, 1, path)


def load_dataset(images_path, labels_path) -> LabeledDataset:
    return LabeledDataset(read_images(images_path), read_labels(labels_path))


def _as_u8(values: np.ndarray, what: str) -> np.ndarray:
    values = np.asarray(values)
    if not np.issubdtype(values.dtype, np.integer):
        raise ValueError(f"{what} must be integers")
    if values.size and (values.min() < 0 or values.max() > 255):
        raise ValueError(f"{what} must fit in an unsigned byte")
    return values.astype(np.uint8)


def write_images(path, images) -> None:
    images = _as_u8(images, "images")
    if images.ndim != 3:
        raise ValueError("images must be a (n, h, w) array")
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "wb") as fh:
        fh.write(struct.pack(">IIII", IMAGES_MAGIC, *images.shape))
        fh.write(images.tobytes())


def write_labels(path, labels) -> None:
    labels = _as_u8(labels, "labels")
    if labels.ndim != 1:
        raise ValueError("labels must be a 1-d array")
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "wb") as fh:
        fh.write(struct.pack(">II", LABELS_MAGIC, len(labels)))
        fh.write(labels.tobytes())
