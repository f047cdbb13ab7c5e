"""IDX-format digit data: parsing, serialization, splits, and the "+1" fooling class.

Images are uint8 arrays of shape (H, W, C) with values in [0, 255]; they are
only scaled to [0, 1] floats at the model boundary. Datasets are read-only
after construction and safe to share across parallel evaluators.
"""

import gzip
import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, DataError, ShapeError

IDX_IMAGE_MAGIC = 2051
IDX_LABEL_MAGIC = 2049


@dataclass
class LabeledDataset:
    """Images plus integer class labels.

    ``fooling_class`` is the index of the extra negative-example class once
    :func:`append_fooling_class` has been applied, else None.
    """

    images: np.ndarray  # (N, H, W, C) uint8
    labels: np.ndarray  # (N,) int64
    num_classes: int
    fooling_class: int | None = None

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.uint8)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim == 3:
            self.images = self.images[:, :, :, None]
        if self.images.ndim != 4:
            raise ShapeError(f"images must be (N, H, W, C), got {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise DataError(
                f"{len(self.images)} images but {len(self.labels)} labels"
            )
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise DataError(
                f"labels outside [0, {self.num_classes}): "
                f"range [{self.labels.min()}, {self.labels.max()}]"
            )

    def __len__(self):
        return len(self.images)

    @property
    def image_shape(self):
        return self.images.shape[1:]


def _read_bytes(path):
    with open(path, "rb") as fh:
        head = fh.read(2)
        rest = fh.read()
    raw = head + rest
    if head == b"\x1f\x8b":
        return gzip.decompress(raw)
    return raw


def parse_idx_images(data: bytes) -> np.ndarray:
    """Decode an IDX image file into a uint8 array of shape (N, H, W, 1)."""
    if len(data) < 16:
        raise FormatError(f"IDX image header needs 16 bytes, got {len(data)}")
    magic, count, rows, cols = struct.unpack(">IIII", data[:16])
    if magic != IDX_IMAGE_MAGIC:
        raise FormatError(f"bad IDX image magic {magic}, expected {IDX_IMAGE_MAGIC}")
    expected = count * rows * cols
    payload = data[16:]
    if len(payload) != expected:
        raise FormatError(
            f"IDX image payload has {len(payload)} bytes, expected {expected}"
        )
    return (
        np.frombuffer(payload, dtype=np.uint8)
        .reshape(count, rows, cols, 1)
        .copy()
    )


def parse_idx_labels(data: bytes) -> np.ndarray:
    """Decode an IDX label file into an int64 array of shape (N,)."""
    if len(data) < 8:
        raise FormatError(f"IDX label header needs 8 bytes, got {len(data)}")
    magic, count = struct.unpack(">II", data[:8])
    if magic != IDX_LABEL_MAGIC:
        raise FormatError(f"bad IDX label magic {magic}, expected {IDX_LABEL_MAGIC}")
    payload = data[8:]
    if len(payload) != count:
        raise FormatError(f"IDX label payload has {len(payload)} bytes, expected {count}")
    return np.frombuffer(payload, dtype=np.uint8).astype(np.int64)


def serialize_idx_images(images: np.ndarray) -> bytes:
    """Inverse of :func:`parse_idx_images` (grayscale only)."""
    arr = np.asarray(images, dtype=np.uint8)
    if arr.ndim == 4:
        if arr.shape[3] != 1:
            raise ShapeError("IDX image files are single-channel")
        arr = arr[:, :, :, 0]
    n, h, w = arr.shape
    return struct.pack(">IIII", IDX_IMAGE_MAGIC, n, h, w) + arr.tobytes()


def serialize_idx_labels(labels: np.ndarray) -> bytes:
    arr = np.asarray(labels)
    if arr.size and (arr.min() < 0 or arr.max() > 255):
        raise DataError("IDX labels must fit in one byte")
    return struct.pack(">II", IDX_LABEL_MAGIC, len(arr)) + arr.astype(np.uint8).tobytes()


def load_dataset(images_path, labels_path, num_classes=10, subset=None) -> LabeledDataset:
    """Load an image/label IDX pair from disk (plain or gzipped).

    ``subset`` caps the dataset to its first N entries, keeping runs desk-scale.
    """
    images = parse_idx_images(_read_bytes(images_path))
    labels = parse_idx_labels(_read_bytes(labels_path))
    if len(images) != len(labels):
        raise DataError(f"{len(images)} images but {len(labels)} labels")
    if subset is not None:
        images = images[:subset]
        labels = labels[:subset]
    return LabeledDataset(images, labels, num_classes)


def save_dataset(ds: LabeledDataset, images_path, labels_path):
    with open(images_path, "wb") as fh:
        fh.write(serialize_idx_images(ds.images))
    with open(labels_path, "wb") as fh:
        fh.write(serialize_idx_labels(ds.labels))


def mean_image(ds: LabeledDataset) -> np.ndarray:
    """Element-wise mean over all images, as float64 in [0, 255]."""
    if len(ds) == 0:
        raise DataError("mean_image of an empty dataset")
    return ds.images.astype(np.float64).mean(axis=0)


def append_fooling_class(ds: LabeledDataset, fooling: np.ndarray) -> LabeledDataset:
    """Return a new dataset with ``fooling`` images filed under the extra class.

    The first application adds class index ``ds.num_classes``; later batches
    reuse that same class, so the class count grows exactly once.
    """
    fooling = np.asarray(fooling, dtype=np.uint8)
    if fooling.ndim == 3:
        fooling = fooling[:, :, :, None]
    if len(fooling) and fooling.shape[1:] != ds.image_shape:
        raise ShapeError(
            f"fooling images are {fooling.shape[1:]}, dataset is {ds.image_shape}"
        )
    if ds.fooling_class is None:
        label = ds.num_classes
        num_classes = ds.num_classes + 1
    else:
        label = ds.fooling_class
        num_classes = ds.num_classes
    if len(fooling) == 0:
        return LabeledDataset(ds.images, ds.labels, num_classes, fooling_class=label)
    images = np.concatenate([ds.images, fooling], axis=0)
    labels = np.concatenate(
        [ds.labels, np.full(len(fooling), label, dtype=np.int64)]
    )
    return LabeledDataset(images, labels, num_classes, fooling_class=label)
