"""Dataset ingestion, synthetic generation, and client partitioning.

Loaders: big-endian IDX image/label pairs (the distribution format of the
small image benchmarks) and numeric CSV with a header row.  CSV features are
standardized per column on ingestion (mean 0, sd 1, guarded divisor) and
labels are densified to 0..n-1 in sorted order of the distinct raw values.

Partitioners: IID round-robin dealing, and the label-skewed scheme where
every client receives samples from exactly `l` distinct classes, built by
splitting each label group into (l*K)/n shards and dealing shards so no
client sees the same label twice.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigError,
    DataConsistencyError,
    DataFormatError,
    DegenerateInputError,
)
from .numerics import FLOAT, require_finite, stream

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

# stream ids reserved by this module (seed is the experiment seed)
_STREAM_SYNTH = 11
_STREAM_IID = 12
_STREAM_NONIID = 13
_STREAM_SHARE = 14


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray  # (N, input_dim) float64
    labels: np.ndarray  # (N,) int64 in [0, num_classes)
    num_classes: int
    name: str = ""
    truth: np.ndarray | None = None  # generator ground truth, when known

    def __post_init__(self):
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise DegenerateInputError("dataset needs a nonempty (N, d) feature matrix")
        if self.labels.shape != (self.features.shape[0],):
            raise DataConsistencyError(
                f"{self.features.shape[0]} feature rows but {self.labels.shape} labels"
            )
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise DataConsistencyError(f"labels outside [0, {self.num_classes})")
        require_finite(self.features, "dataset features")

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def input_dim(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class PartitionPlan:
    """Disjoint, covering assignment of sample indices to clients."""

    assignment: tuple  # tuple of int64 index arrays, one per client
    scheme: str

    @property
    def num_clients(self) -> int:
        return len(self.assignment)

    def label_sets(self, dataset: Dataset) -> list:
        return [np.unique(dataset.labels[idx]) for idx in self.assignment]


def _open_maybe_gzip(path):
    if str(path).endswith(".gz"):
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_exact(f, nbytes: int, path) -> bytes:
    data = f.read(nbytes)
    if len(data) != nbytes:
        raise OSError(f"truncated file {path}: wanted {nbytes} bytes, got {len(data)}")
    return data


def load_idx(images_path, labels_path, name: str = "") -> Dataset:
    """Parse a big-endian IDX image/label file pair into a flat float dataset.

    Pixels are scaled to [0, 1] and flattened row-major; the image and label
    counts are cross-checked and nothing is returned on any failure.
    """
    with _open_maybe_gzip(images_path) as f:
        magic, count, rows, cols = struct.unpack(">IIII", _read_exact(f, 16, images_path))
        if magic != IDX_IMAGES_MAGIC:
            raise DataFormatError(
                f"{images_path}: bad image magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}"
            )
        if count < 1 or rows < 1 or cols < 1:
            raise DataFormatError(f"{images_path}: degenerate dimensions {count}x{rows}x{cols}")
        pixels = np.frombuffer(_read_exact(f, count * rows * cols, images_path), dtype=np.uint8)
    with _open_maybe_gzip(labels_path) as f:
        magic, label_count = struct.unpack(">II", _read_exact(f, 8, labels_path))
        if magic != IDX_LABELS_MAGIC:
            raise DataFormatError(
                f"{labels_path}: bad label magic 0x{magic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}"
            )
        raw_labels = np.frombuffer(_read_exact(f, label_count, labels_path), dtype=np.uint8)
    if label_count != count:
        raise DataConsistencyError(f"{count} images but {label_count} labels")
    features = pixels.reshape(count, rows * cols).astype(FLOAT) / 255.0
    labels = raw_labels.astype(np.int64)
    return Dataset(
        features=features,
        labels=labels,
        num_classes=int(labels.max()) + 1,
        name=name or str(images_path),
    )


def load_csv(path, label_column: str, name: str = "") -> Dataset:
    """Numeric CSV with header; features standardized, labels densified."""
    with open(path, "r", encoding="utf-8", newline="") as f:
        import csv as _csv

        reader = _csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        if label_column not in header:
            raise DataFormatError(f"{path}: no column named {label_column!r} in header {header}")
        label_idx = header.index(label_column)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataFormatError(
                    f"{path}:{lineno}: ragged row with {len(row)} cells, header has {len(header)}"
                )
            try:
                rows.append([float(cell) for cell in row])
            except ValueError:
                raise DataFormatError(f"{path}:{lineno}: non-numeric cell") from None
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    table = np.asarray(rows, dtype=FLOAT)
    raw_labels = table[:, label_idx]
    features = np.delete(table, label_idx, axis=1)
    mean = features.mean(axis=0)
    sd = features.std(axis=0)
    features = (features - mean) / np.maximum(sd, 1e-12)
    distinct = np.unique(raw_labels)
    labels = np.searchsorted(distinct, raw_labels).astype(np.int64)
    return Dataset(
        features=features,
        labels=labels,
        num_classes=len(distinct),
        name=name or str(path),
    )


def synth_logistic(
    num_samples: int,
    input_dim: int,
    num_classes: int,
    margin: float,
    seed: int,
) -> Dataset:
    """Gaussian features with labels sampled from a margin-sharpened softmax.

    The ground-truth weight matrix is drawn from the seed and retained on the
    dataset for diagnostics; margin -> infinity collapses label sampling to
    the argmax of the true logits.
    """
    if num_samples < 1 or input_dim < 1:
        raise ConfigError("num_samples and input_dim must be >= 1")
    if num_classes < 2:
        raise ConfigError("num_classes must be >= 2")
    rng = stream(seed, _STREAM_SYNTH)
    truth = rng.standard_normal((num_classes, input_dim))
    X = rng.standard_normal((num_samples, input_dim))
    logits = margin * (X @ truth.T)
    probs = np.exp(logits - logits.max(axis=1, keepdims=True))
    probs /= probs.sum(axis=1, keepdims=True)
    u = rng.random(num_samples)
    labels = (u[:, None] > np.cumsum(probs, axis=1)).sum(axis=1).astype(np.int64)
    labels = np.minimum(labels, num_classes - 1)
    return Dataset(
        features=X,
        labels=labels,
        num_classes=num_classes,
        name=f"synth(n={num_samples},d={input_dim},c={num_classes},margin={margin})",
        truth=truth,
    )


def partition_iid(dataset: Dataset, num_clients: int, seed: int) -> PartitionPlan:
    """Shuffle then deal round-robin; client sizes differ by at most one."""
    n = len(dataset)
    if num_clients < 1:
        raise ConfigError("need at least one client")
    if num_clients > n:
        raise ConfigError(f"cannot split {n} samples across {num_clients} clients")
    perm = stream(seed, _STREAM_IID).permutation(n)
    assignment = tuple(np.sort(perm[k::num_clients]).astype(np.int64) for k in range(num_clients))
    return PartitionPlan(assignment=assignment, scheme="iid")


def partition_noniid_l(
    dataset: Dataset, num_clients: int, distinct_labels: int, seed: int
) -> PartitionPlan:
    """Label-skewed partition: every client gets shards of exactly l labels.

    Each label group is split into (l*K)/n near-equal shards; clients are
    filled in random order, each taking one shard from the l label groups
    with the most shards remaining, ties broken by the seeded stream.  That
    greedy rule always succeeds under the divisibility precondition and uses
    every shard exactly once.  Random tie-breaking matters: a fixed tie
    order would lock the same label combinations onto every client, leaving
    each class co-resident with only one other class.
    """
    n_classes = dataset.num_classes
    l, K = distinct_labels, num_clients
    if K < 1:
        raise ConfigError("need at least one client")
    if not (1 <= l <= n_classes):
        raise ConfigError(f"distinct label count l={l} must lie in [1, {n_classes}]")
    if (l * K) % n_classes != 0:
        raise ConfigError(
            f"non-IID-l partition needs (l * K) divisible by num_classes: "
            f"l={l}, K={K}, num_classes={n_classes}, (l*K) % n = {(l * K) % n_classes}"
        )
    shards_per_label = (l * K) // n_classes
    rng = stream(seed, _STREAM_NONIID)
    shard_stacks = []
    for c in range(n_classes):
        group = np.flatnonzero(dataset.labels == c)
        if len(group) < shards_per_label:
            raise ConfigError(
                f"label {c} has {len(group)} samples, cannot form {shards_per_label} nonempty shards"
            )
        group = rng.permutation(group)
        shard_stacks.append([np.sort(s) for s in np.array_split(group, shards_per_label)])
    remaining = np.full(n_classes, shards_per_label, dtype=np.int64)
    assignment = [None] * K
    for k in rng.permutation(K):
        tiebreak = rng.permutation(n_classes)
        order = sorted(range(n_classes), key=lambda c: (-remaining[c], tiebreak[c]))
        chosen = order[:l]
        if remaining[chosen[-1]] == 0:
            raise AssertionError("shard accounting broke; divisibility precondition violated?")
        parts = []
        for c in chosen:
            parts.append(shard_stacks[c].pop())
            remaining[c] -= 1
        assignment[k] = np.sort(np.concatenate(parts)).astype(np.int64)
    return PartitionPlan(assignment=tuple(assignment), scheme=f"noniid-{l}")


def share_subset(dataset: Dataset, beta: float, num_clients: int, seed: int) -> np.ndarray:
    """Indices of the globally shared subset appended to every client's view.

    Size is round(beta * mean client size); drawing it from the full training
    pool means duplicates with a client's own samples are possible.
    """
    if not (0.0 < beta <= 1.0):
        raise ConfigError(f"sharing rate beta must lie in (0, 1], got {beta}")
    mean_client_size = len(dataset) / num_clients
    size = int(round(beta * mean_client_size))
    if size < 1:
        raise ConfigError(
            f"beta={beta} with mean client size {mean_client_size:.1f} shares zero samples"
        )
    rng = stream(seed, _STREAM_SHARE)
    return np.sort(rng.choice(len(dataset), size=size, replace=False)).astype(np.int64)
