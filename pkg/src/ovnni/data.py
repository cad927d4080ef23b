"""Dataset handling: IDX file ingestion, normalization, class subsetting,
one-vs-all relabeling with class-prior weights, batching and synthetic blobs.

All randomness goes through numpy's PCG64 generator so that a given seed
reproduces the same stream on every platform.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateClassError, EmptyInputError, IdxFormatError, NumericError

IMAGES_MAGIC = 2051
LABELS_MAGIC = 2049

# hard cap on element count so a corrupt header cannot trigger a huge allocation
_MAX_ELEMENTS = 1 << 30


def rng_from_seed(seed: int) -> np.random.Generator:
    """The one deterministic 64-bit generator used everywhere in this package."""
    return np.random.Generator(np.random.PCG64(seed & 0xFFFFFFFFFFFFFFFF))


@dataclass(frozen=True)
class LabeledDataset:
    """Feature matrix with integer class labels.

    features: (n, d) float64, finite entries.
    labels:   (n,) integers in [0, n_label).
    n_label:  number of classes.

    n may be zero (e.g. the dropped side of a subset that kept every class);
    training rejects empty datasets at the call site.
    """

    features: np.ndarray
    labels: np.ndarray
    n_label: int

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        labs = np.asarray(self.labels, dtype=np.int64)
        if feats.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {feats.shape}")
        if labs.ndim != 1 or labs.shape[0] != feats.shape[0]:
            raise ValueError("labels must be 1-D with one entry per feature row")
        if self.n_label < 1:
            raise ValueError("n_label must be >= 1")
        if feats.size and not np.isfinite(feats).all():
            raise NumericError("dataset features contain non-finite values")
        if labs.size and (labs.min() < 0 or labs.max() >= self.n_label):
            raise ValueError(f"labels must lie in [0, {self.n_label})")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labs)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class BinaryOvaDataset:
    """One-vs-all view of a dataset for a single positive class.

    class_weights is (w_negative, w_positive) = (tau, 1 - tau) where tau is
    the fraction of positives, so the rarer side carries the larger weight.
    """

    features: np.ndarray
    binary_labels: np.ndarray
    positive_class: int
    class_weights: tuple[float, float]

    def to_dataset(self) -> LabeledDataset:
        return LabeledDataset(self.features, self.binary_labels, n_label=2)


def parse_idx(payload: bytes) -> np.ndarray:
    """Decode an IDX payload.

    Images (magic 2051) come back as an (n, rows*cols) float64 matrix scaled
    by 1/255; labels (magic 2049) as an (n,) int64 vector. Anything else is
    rejected with an IdxFormatError pointing at the offending byte offset.
    """
    if len(payload) < 4:
        raise IdxFormatError(len(payload), "truncated IDX header, no magic number")
    (magic,) = struct.unpack(">I", payload[:4])
    if magic == IMAGES_MAGIC:
        ndim = 3
    elif magic == LABELS_MAGIC:
        ndim = 1
    else:
        raise IdxFormatError(0, f"unsupported IDX magic {magic}")
    header_len = 4 + 4 * ndim
    if len(payload) < header_len:
        raise IdxFormatError(len(payload), "truncated IDX header, missing dimension sizes")
    dims = struct.unpack(f">{ndim}I", payload[4:header_len])
    count = 1
    for d in dims:
        count *= d
    if count > _MAX_ELEMENTS:
        raise IdxFormatError(4, f"dimension sizes {dims} overflow the element cap")
    if len(payload) - header_len != count:
        raise IdxFormatError(
            header_len,
            f"payload holds {len(payload) - header_len} bytes, expected {count}",
        )
    raw = np.frombuffer(payload, dtype=np.uint8, offset=header_len)
    if magic == LABELS_MAGIC:
        return raw.astype(np.int64)
    n, rows, cols = dims
    return raw.astype(np.float64).reshape(n, rows * cols) / 255.0


def load_idx(path) -> np.ndarray:
    """Read an IDX file from disk, transparently handling gzip compression."""
    with open(path, "rb") as fh:
        payload = fh.read()
    if payload[:2] == b"\x1f\x8b":
        payload = gzip.decompress(payload)
    return parse_idx(payload)


def write_idx_images(images: np.ndarray) -> bytes:
    """Serialize an (n, rows, cols) uint8 array to IDX image bytes."""
    images = np.ascontiguousarray(images, dtype=np.uint8)
    if images.ndim != 3:
        raise ValueError(f"expected (n, rows, cols) images, got shape {images.shape}")
    n, rows, cols = images.shape
    return struct.pack(">IIII", IMAGES_MAGIC, n, rows, cols) + images.tobytes()


def write_idx_labels(labels: np.ndarray) -> bytes:
    """Serialize a label vector (values in 0..255) to IDX label bytes."""
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise ValueError("labels must be 1-D")
    if labels.size and (labels.min() < 0 or labels.max() > 255):
        raise ValueError("IDX labels must fit in an unsigned byte")
    return struct.pack(">II", LABELS_MAGIC, labels.size) + labels.astype(np.uint8).tobytes()


def load_dataset(images_path, labels_path, n_label: int | None = None) -> LabeledDataset:
    """Load an image/label IDX pair into a dataset.

    n_label defaults to max(label) + 1.
    """
    features = load_idx(images_path)
    labels = load_idx(labels_path)
    if features.ndim != 2:
        raise IdxFormatError(0, f"{images_path} is not an IDX image file")
    if labels.ndim != 1:
        raise IdxFormatError(0, f"{labels_path} is not an IDX label file")
    if features.shape[0] != labels.shape[0]:
        raise ValueError(
            f"image/label count mismatch: {features.shape[0]} vs {labels.shape[0]}"
        )
    if n_label is None:
        n_label = int(labels.max()) + 1 if labels.size else 1
    return LabeledDataset(features, labels, n_label)


def normalize(values: np.ndarray) -> np.ndarray:
    """Map raw features into [0, 1]: bytes are divided by 255, floats clamped."""
    values = np.asarray(values)
    if values.dtype == np.uint8:
        return values.astype(np.float64) / 255.0
    values = values.astype(np.float64)
    if values.size and not np.isfinite(values).all():
        raise NumericError("cannot normalize non-finite features")
    return np.clip(values, 0.0, 1.0)


def subset_classes(data: LabeledDataset, keep) -> tuple[LabeledDataset, LabeledDataset]:
    """Split a dataset into the kept classes (labels remapped to 0..k-1 in
    ascending original order) and everything else (original labels retained)."""
    keep = sorted(set(int(c) for c in keep))
    if not keep:
        raise ValueError("keep set must not be empty")
    for c in keep:
        if c < 0 or c >= data.n_label:
            raise ValueError(f"unknown class {c} (dataset has {data.n_label} classes)")
    remap = {c: i for i, c in enumerate(keep)}
    mask = np.isin(data.labels, keep)
    kept_labels = np.array([remap[int(c)] for c in data.labels[mask]], dtype=np.int64)
    kept = LabeledDataset(data.features[mask], kept_labels, n_label=len(keep))
    dropped = LabeledDataset(data.features[~mask], data.labels[~mask], n_label=data.n_label)
    return kept, dropped


def make_ova(data: LabeledDataset, j: int) -> BinaryOvaDataset:
    """Relabel a dataset for the binary task: class j versus all others.

    The loss weights follow the class prior: with tau the fraction of
    positives, positives get weight 1 - tau and negatives get tau.
    """
    if j < 0 or j >= data.n_label:
        raise ValueError(f"positive class {j} out of range [0, {data.n_label})")
    binary = (data.labels == j).astype(np.int64)
    n_pos = int(binary.sum())
    if n_pos == 0 or n_pos == data.n:
        raise DegenerateClassError(
            f"class {j} has {n_pos} of {data.n} samples; one-vs-all needs both sides"
        )
    tau = n_pos / data.n
    return BinaryOvaDataset(data.features, binary, j, (tau, 1.0 - tau))


def synth_blobs(means, std: float, n_per_class: int, seed: int) -> LabeledDataset:
    """Isotropic Gaussian blobs, one per mean, deterministic per seed."""
    means = np.atleast_2d(np.asarray(means, dtype=np.float64))
    if std <= 0:
        raise ValueError("std must be positive")
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    rng = rng_from_seed(seed)
    k, d = means.shape
    features = np.empty((k * n_per_class, d))
    labels = np.empty(k * n_per_class, dtype=np.int64)
    for c in range(k):
        block = slice(c * n_per_class, (c + 1) * n_per_class)
        features[block] = means[c] + std * rng.standard_normal((n_per_class, d))
        labels[block] = c
    return LabeledDataset(features, labels, n_label=k)


def batches(data: LabeledDataset, batch_size: int, seed: int, epoch: int) -> list[np.ndarray]:
    """Seeded shuffled index batches for one epoch.

    The permutation is drawn from generator seed^epoch, then cut into
    consecutive batches; the last one may be short.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if data.n == 0:
        raise EmptyInputError("cannot batch an empty dataset")
    perm = rng_from_seed(seed ^ epoch).permutation(data.n)
    return [perm[i : i + batch_size] for i in range(0, data.n, batch_size)]
