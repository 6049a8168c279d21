"""Dataset ingestion: big-endian IDX files, synthetic Gaussian blobs,
deterministic splits, and a simulated annotation oracle."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray
    num_classes: int
    name: str

    def __post_init__(self):
        inputs = np.ascontiguousarray(self.inputs, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if len(labels) < 1:
            raise ValueError("dataset is empty")
        if inputs.shape[0] != len(labels):
            raise ValueError(f"{inputs.shape[0]} inputs for {len(labels)} labels")
        if labels.min() < 0 or labels.max() >= self.num_classes:
            raise ValueError(f"labels outside [0, {self.num_classes})")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return len(self.labels)

    def take(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.inputs[idx], self.labels[idx], self.num_classes, self.name)


def _read_be32(data: bytes, offset: int, path: str) -> int:
    if offset + 4 > len(data):
        raise IdxFormatError(f"{path}: truncated header at byte {offset}")
    return struct.unpack_from(">I", data, offset)[0]


def load_idx(images_path: str, labels_path: str) -> Dataset:
    """Parse an IDX image/label file pair into a Dataset.

    Pixels are scaled to [0, 1] floats and images get an explicit channel
    dimension: inputs have shape (n, 1, rows, cols).
    """
    with open(images_path, "rb") as f:
        img_data = f.read()
    with open(labels_path, "rb") as f:
        lab_data = f.read()
    magic = _read_be32(img_data, 0, images_path)
    if magic != IDX_IMAGES_MAGIC:
        raise IdxFormatError(f"{images_path}: bad magic 0x{magic:08x} at byte 0")
    n = _read_be32(img_data, 4, images_path)
    rows = _read_be32(img_data, 8, images_path)
    cols = _read_be32(img_data, 12, images_path)
    expected = 16 + n * rows * cols
    if len(img_data) < expected:
        raise IdxFormatError(f"{images_path}: truncated pixel data at byte {len(img_data)}")
    lab_magic = _read_be32(lab_data, 0, labels_path)
    if lab_magic != IDX_LABELS_MAGIC:
        raise IdxFormatError(f"{labels_path}: bad magic 0x{lab_magic:08x} at byte 0")
    n_labels = _read_be32(lab_data, 4, labels_path)
    if n_labels != n:
        raise IdxFormatError(
            f"count mismatch at byte 4: {images_path} has {n} items, "
            f"{labels_path} has {n_labels}"
        )
    if len(lab_data) < 8 + n:
        raise IdxFormatError(f"{labels_path}: truncated label data at byte {len(lab_data)}")
    pixels = np.frombuffer(img_data, dtype=np.uint8, count=n * rows * cols, offset=16)
    labels = np.frombuffer(lab_data, dtype=np.uint8, count=n, offset=8).astype(np.int64)
    inputs = pixels.reshape(n, 1, rows, cols).astype(np.float64) / 255.0
    num_classes = int(labels.max()) + 1 if n else 0
    return Dataset(inputs, labels, max(num_classes, 2), name="idx")


def save_idx(dataset: Dataset, images_path: str, labels_path: str) -> None:
    """Write a (n, 1, rows, cols) image dataset as an IDX file pair."""
    if dataset.inputs.ndim != 4 or dataset.inputs.shape[1] != 1:
        raise ValueError(f"expected inputs of shape (n, 1, rows, cols), got {dataset.inputs.shape}")
    n, _, rows, cols = dataset.inputs.shape
    pixels = np.rint(dataset.inputs * 255.0).astype(np.uint8)
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols))
        f.write(pixels.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABELS_MAGIC, n))
        f.write(dataset.labels.astype(np.uint8).tobytes())


def gen_blobs(n: int, classes: int, dim: int, spread: float, seed: int) -> Dataset:
    """Gaussian blobs with class means at distance 2 along coordinate axes.

    Classes beyond the dimension wrap around at growing distance.  Labels
    cycle through the classes so per-class counts differ by at most one.
    """
    if n < classes:
        raise ValueError(f"need at least one sample per class: n={n} < classes={classes}")
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    means = np.zeros((classes, dim))
    for c in range(classes):
        means[c, c % dim] = 2.0 * (1 + c // dim)
    labels = np.arange(n, dtype=np.int64) % classes
    rng = np.random.default_rng(seed)
    inputs = means[labels] + rng.standard_normal((n, dim)) * spread
    return Dataset(inputs, labels, classes, name=f"blobs(n={n},c={classes},d={dim},s={spread})")


def split(dataset: Dataset, train_frac: float, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded shuffle then cut; the train side gets floor(n * train_frac) samples."""
    if not 0.0 < train_frac < 1.0:
        raise ValueError(f"train_frac must be in (0, 1), got {train_frac}")
    n = dataset.n
    n_train = int(n * train_frac + 1e-9)
    if n_train < 1 or n_train >= n:
        raise ValueError(f"train_frac {train_frac} leaves an empty side for n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    return dataset.take(perm[:n_train]), dataset.take(perm[n_train:])


class LabelOracle:
    """Simulated annotator: serves each hidden label exactly once.

    Double queries are rejected, which guards against pool-conservation bugs
    in the selection loop; `queries` counts every label served.
    """

    def __init__(self, labels):
        self._labels = np.asarray(labels, dtype=np.int64)
        self._served: set[int] = set()
        self.queries = 0

    def query(self, indices) -> np.ndarray:
        idx = [int(i) for i in indices]
        for i in idx:
            if i < 0 or i >= len(self._labels):
                raise ValueError(f"index {i} outside the dataset")
            if i in self._served:
                raise ValueError(f"index {i} was already labeled")
        self._served.update(idx)
        self.queries += len(idx)
        return self._labels[idx].copy()
