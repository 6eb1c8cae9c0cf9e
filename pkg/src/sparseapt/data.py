"""Dataset loading, normalization, splitting and batch iteration.

Cache format (``save_dataset`` / ``load_dataset``): an uncompressed ``.npz``
archive with arrays ``features`` (float64, M x d), ``labels`` (int64, M) and,
when the dataset is normalized, ``norm_mean`` and ``norm_var`` (float64, d).
"""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator

import numpy as np

from .nn import Batch

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class Normalization:
    mean: np.ndarray
    var: np.ndarray

    def apply(self, features: np.ndarray) -> np.ndarray:
        return (features - self.mean) / np.sqrt(self.var)


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    normalization: Normalization | None = None

    def __post_init__(self):
        if self.features.ndim != 2 or self.features.shape[0] != self.labels.shape[0]:
            raise ValueError(
                f"features {self.features.shape} and labels {self.labels.shape} disagree on row count"
            )

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def n_features(self) -> int:
        return int(self.features.shape[1])

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1 if len(self) else 0

    def subset(self, idx) -> Dataset:
        return replace(self, features=self.features[idx], labels=self.labels[idx])


def _open(path):
    path = Path(path)
    return gzip.open(path, "rb") if path.suffix == ".gz" else open(path, "rb")


def load_idx(images_path, labels_path) -> Dataset:
    """Read an IDX image/label file pair; pixels are scaled to [0, 1]."""
    with _open(images_path) as f:
        raw = f.read()
    if len(raw) < 16:
        raise ValueError(f"{images_path}: header truncated")
    magic, count, rows, cols = struct.unpack(">IIII", raw[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise ValueError(f"{images_path}: magic is 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}")
    pixels = np.frombuffer(raw, dtype=np.uint8, offset=16)
    if pixels.size != count * rows * cols:
        raise ValueError(f"{images_path}: pixel count {pixels.size} != count*rows*cols = {count * rows * cols}")

    with _open(labels_path) as f:
        raw = f.read()
    if len(raw) < 8:
        raise ValueError(f"{labels_path}: header truncated")
    magic, n_labels = struct.unpack(">II", raw[:8])
    if magic != IDX_LABELS_MAGIC:
        raise ValueError(f"{labels_path}: magic is 0x{magic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}")
    if n_labels != count:
        raise ValueError(f"count mismatch: {count} images vs {n_labels} labels")
    labels = np.frombuffer(raw, dtype=np.uint8, offset=8)
    if labels.size != n_labels:
        raise ValueError(f"{labels_path}: label count {labels.size} != header count {n_labels}")

    features = pixels.reshape(count, rows * cols).astype(np.float64) / 255.0
    return Dataset(features, labels.astype(np.int64))


def write_idx(images_path, labels_path, images: np.ndarray, labels: np.ndarray) -> None:
    """Write uint8 images (M x rows x cols) and labels in IDX format."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    m, rows, cols = images.shape
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, m, rows, cols))
        f.write(images.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABELS_MAGIC, labels.size))
        f.write(labels.tobytes())


def fit_normalization(features: np.ndarray) -> Normalization:
    mean = features.mean(axis=0)
    var = features.var(axis=0)
    # constant features (e.g. blank border pixels) would divide by zero
    var = np.where(var > 0, var, 1.0)
    return Normalization(mean, var)


def normalize(dataset: Dataset, record: Normalization) -> Dataset:
    return Dataset(record.apply(dataset.features), dataset.labels, record)


def split(dataset: Dataset, validation_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Shuffled train/validation split; normalization is fitted on train only."""
    if not 0.0 <= validation_fraction < 1.0:
        raise ValueError(f"validation_fraction must be in [0, 1), got {validation_fraction}")
    m = len(dataset)
    perm = np.random.default_rng(seed).permutation(m)
    n_val = int(round(validation_fraction * m))
    val_idx, train_idx = np.sort(perm[:n_val]), np.sort(perm[n_val:])
    train = dataset.subset(train_idx)
    record = fit_normalization(train.features)
    return normalize(train, record), normalize(dataset.subset(val_idx), record)


def synthetic_blobs(classes: int, per_class: int, d: int, separation: float, seed: int) -> Dataset:
    """Unit-variance Gaussian blobs.

    Class c sits at ``±separation/2`` along axis ``(c // 2) % d``, pushed out
    by one more half-separation for every full pass over the axes, so two
    classes are ``separation`` apart.
    """
    if classes < 1 or per_class < 1 or d < 1:
        raise ValueError("classes, per_class and d must be positive")
    rng = np.random.default_rng(seed)
    centers = np.zeros((classes, d))
    for c in range(classes):
        sign = 1.0 if c % 2 == 0 else -1.0
        centers[c, (c // 2) % d] = sign * 0.5 * separation * (1 + c // (2 * d))
    labels = np.repeat(np.arange(classes), per_class)
    features = centers[labels] + rng.standard_normal((labels.size, d))
    return Dataset(features, labels.astype(np.int64))


def load_digits_dataset() -> Dataset:
    """The 8x8 handwritten digits bundled with scikit-learn (1797 samples)."""
    from sklearn.datasets import load_digits

    bunch = load_digits()
    return Dataset(bunch.data.astype(np.float64) / 16.0, bunch.target.astype(np.int64))


def batches(dataset: Dataset, batch_size: int, seed: int, epoch: int) -> Iterator[Batch]:
    """One epoch of shuffled batches; the last batch may be short."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    perm = np.random.default_rng([seed, epoch]).permutation(len(dataset))
    for s in range(0, perm.size, batch_size):
        idx = perm[s:s + batch_size]
        yield Batch(dataset.features[idx], dataset.labels[idx])


def batch_stream(dataset: Dataset, batch_size: int, seed: int) -> Iterator[Batch]:
    """Endless batches over successive epochs."""
    epoch = 0
    while True:
        yield from batches(dataset, batch_size, seed, epoch)
        epoch += 1


def save_dataset(dataset: Dataset, path) -> None:
    arrays = {"features": dataset.features, "labels": dataset.labels}
    if dataset.normalization is not None:
        arrays["norm_mean"] = dataset.normalization.mean
        arrays["norm_var"] = dataset.normalization.var
    with open(path, "wb") as f:
        np.savez(f, **arrays)


def load_dataset(path) -> Dataset:
    with np.load(path) as z:
        norm = Normalization(z["norm_mean"], z["norm_var"]) if "norm_mean" in z else None
        return Dataset(z["features"], z["labels"], norm)
