"""Synthetic datasets, Dirichlet non-IID partitioning, paired vector
augmentation, and CSV / binary dataset I/O.

Labels are carried only for partitioning and probe evaluation; training
losses never see them.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from .numerics import ParameterError, rng_dirichlet, rng_gaussian

DATASET_MAGIC = b"SSDD"
DATASET_VERSION = 1


@dataclass
class Dataset:
    features: np.ndarray  # (n, input_dim)
    labels: np.ndarray    # (n,) int class ids

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def input_dim(self) -> int:
        return self.features.shape[1]

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0


@dataclass
class ClientPartition:
    """Per-client index lists into a Dataset; disjoint, every client
    nonempty."""
    assignments: list[np.ndarray]

    @property
    def num_clients(self) -> int:
        return len(self.assignments)


@dataclass
class AugmentConfig:
    noise_stddev: float = 0.1
    dropout_prob: float = 0.1

    def __post_init__(self):
        if not 0.0 <= self.dropout_prob < 1.0:
            raise ParameterError(f"dropout_prob must be in [0,1), got {self.dropout_prob}")
        if self.noise_stddev < 0:
            raise ParameterError(f"noise_stddev must be >= 0, got {self.noise_stddev}")


def generate_gaussian_mixture(rng: np.random.Generator, num_classes: int,
                              samples_per_class: int, input_dim: int,
                              center_spread: float = 5.0,
                              within_std: float = 1.0) -> Dataset:
    """Isotropic Gaussian blobs: centers ~ N(0, center_spread^2 I),
    samples ~ N(center, within_std^2 I)."""
    if num_classes < 1 or samples_per_class < 1 or input_dim < 1:
        raise ParameterError("counts and dims must be >= 1")
    centers = rng_gaussian(rng, num_classes, input_dim, 0.0, center_spread)
    feats = np.empty((num_classes * samples_per_class, input_dim))
    labels = np.empty(num_classes * samples_per_class, dtype=np.int64)
    for c in range(num_classes):
        lo = c * samples_per_class
        hi = lo + samples_per_class
        feats[lo:hi] = centers[c] + rng_gaussian(
            rng, samples_per_class, input_dim, 0.0, within_std)
        labels[lo:hi] = c
    return Dataset(feats, labels)


def _largest_remainder_counts(proportions: np.ndarray, total: int) -> np.ndarray:
    """Integer counts summing to ``total`` closest to proportions*total;
    ties broken by index."""
    raw = proportions * total
    counts = np.floor(raw).astype(np.int64)
    shortfall = total - counts.sum()
    remainders = raw - counts
    order = np.lexsort((np.arange(len(raw)), -remainders))
    for i in range(shortfall):
        counts[order[i]] += 1
    return counts


def dirichlet_partition(rng: np.random.Generator, labels, K: int,
                        dirichlet_alpha: float) -> ClientPartition:
    """Class-wise Dirichlet split: each class's samples are divided among
    the K clients by proportions drawn from Dir(alpha * 1_K). Empty
    clients are repaired by moving one sample from the largest client."""
    labels = np.asarray(labels, dtype=np.int64)
    n = labels.size
    if K < 1:
        raise ParameterError(f"K must be >= 1, got {K}")
    if K > n:
        raise ParameterError(f"cannot split {n} samples across {K} clients")
    if dirichlet_alpha <= 0:
        raise ParameterError(f"dirichlet_alpha must be positive, got {dirichlet_alpha}")

    buckets: list[list[int]] = [[] for _ in range(K)]
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        idx = rng.permutation(idx)
        props = rng_dirichlet(rng, np.full(K, dirichlet_alpha))
        counts = _largest_remainder_counts(props, idx.size)
        pos = 0
        for k in range(K):
            buckets[k].extend(idx[pos:pos + counts[k]].tolist())
            pos += counts[k]

    # Repair empties: take one sample from the current largest client.
    for k in range(K):
        while not buckets[k]:
            donor = max(range(K), key=lambda j: len(buckets[j]))
            if len(buckets[donor]) <= 1:
                raise ParameterError("not enough samples to give every client one")
            buckets[k].append(buckets[donor].pop())

    return ClientPartition([np.array(sorted(b), dtype=np.int64) for b in buckets])


def _one_view(rng: np.random.Generator, x: np.ndarray, cfg: AugmentConfig) -> np.ndarray:
    view = x + rng_gaussian(rng, x.shape[0], x.shape[1], 0.0, cfg.noise_stddev)
    if cfg.dropout_prob > 0:
        keep = rng.random(x.shape) >= cfg.dropout_prob
        view = view * keep
    return view


def augment_pair(rng: np.random.Generator, x: np.ndarray, cfg: AugmentConfig):
    """Two independent stochastic views of the same batch: additive
    Gaussian noise then independent coordinate dropout. The input is
    never modified."""
    x = np.asarray(x, dtype=np.float64)
    return _one_view(rng, x, cfg), _one_view(rng, x, cfg)


def load_csv_dataset(path: str, label_column: str) -> Dataset:
    """Numeric CSV with a header row; all non-label columns become
    features in header order, the label column parses as integers."""
    if not os.path.exists(path):
        raise IOError(f"dataset file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if len(lines) < 2:
        raise ValueError(f"{path}: no data rows")
    header = lines[0].split(",")
    if label_column not in header:
        raise ValueError(f"{path}: label column {label_column!r} not in header {header}")
    label_idx = header.index(label_column)
    feats, labels = [], []
    for rownum, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != len(header):
            raise ValueError(f"{path}: row {rownum} has {len(cells)} cells, expected {len(header)}")
        try:
            labels.append(int(float(cells[label_idx])))
            feats.append([float(c) for i, c in enumerate(cells) if i != label_idx])
        except ValueError as exc:
            raise ValueError(f"{path}: row {rownum}: {exc}") from None
    return Dataset(np.asarray(feats, dtype=np.float64), np.asarray(labels, dtype=np.int64))


def save_csv_dataset(ds: Dataset, path: str, label_column: str = "label") -> None:
    header = [f"f{i}" for i in range(ds.input_dim)] + [label_column]
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row, lab in zip(ds.features, ds.labels):
            fh.write(",".join(repr(float(v)) for v in row) + f",{int(lab)}\n")
    os.replace(tmp, path)


def save_binary_dataset(ds: Dataset, path: str) -> None:
    """Little-endian container: magic, version, n, input_dim, then
    float64 features row-major and int64 labels."""
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(DATASET_MAGIC)
        fh.write(struct.pack("<IQQ", DATASET_VERSION, ds.n, ds.input_dim))
        fh.write(ds.features.astype("<f8").tobytes())
        fh.write(ds.labels.astype("<i8").tobytes())
    os.replace(tmp, path)


def load_binary_dataset(path: str) -> Dataset:
    with open(path, "rb") as fh:
        if fh.read(4) != DATASET_MAGIC:
            raise ValueError(f"not a binary dataset: {path}")
        version, n, dim = struct.unpack("<IQQ", fh.read(20))
        if version != DATASET_VERSION:
            raise ValueError(f"unsupported dataset version {version}")
        feats = np.frombuffer(fh.read(8 * n * dim), dtype="<f8").reshape(n, dim)
        labels = np.frombuffer(fh.read(8 * n), dtype="<i8")
    return Dataset(feats.astype(np.float64), labels.astype(np.int64))
