"""Dataset ingestion, one-hot encoding, normalization, synthetic generation."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

_BLOBS_STREAM = 0xB10B5  # salt so synthetic data never shares an RNG stream with weights


class DataError(ValueError):
    """Malformed dataset or CSV input."""


def one_hot(labels, q: int) -> np.ndarray:
    """q x J matrix with a single 1 per column at the label's row."""
    labels = np.asarray(labels, dtype=int)
    if labels.ndim != 1:
        raise DataError("labels must be a 1-D sequence")
    if labels.size and (labels.min() < 0 or labels.max() >= q):
        bad = labels[(labels < 0) | (labels >= q)][0]
        raise DataError(f"label {bad} outside 0..{q - 1}")
    t = np.zeros((q, labels.size))
    t[labels, np.arange(labels.size)] = 1.0
    return t


@dataclass(frozen=True)
class LabeledDataset:
    """Feature matrix x (p x J), one-hot targets t (q x J), integer labels (J,)."""

    x: np.ndarray
    t: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if self.x.ndim != 2 or self.t.ndim != 2:
            raise DataError("x and t must be 2-D matrices")
        if self.x.shape[1] != self.t.shape[1] or self.labels.shape != (self.x.shape[1],):
            raise DataError(
                f"sample-count mismatch: x {self.x.shape}, t {self.t.shape}, "
                f"labels {self.labels.shape}"
            )
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.t))):
            raise DataError("non-finite entries in dataset")
        ok = (self.t.sum(axis=0) == 1.0) & np.all((self.t == 0.0) | (self.t == 1.0), axis=0)
        if not np.all(ok):
            raise DataError(f"column {int(np.argmin(ok))} of t is not one-hot")
        if self.t.shape[1] and not np.array_equal(np.argmax(self.t, axis=0), self.labels):
            raise DataError("labels inconsistent with one-hot targets")

    @property
    def num_samples(self) -> int:
        return self.x.shape[1]

    @property
    def input_dim(self) -> int:
        return self.x.shape[0]

    @property
    def num_classes(self) -> int:
        return self.t.shape[0]

    @classmethod
    def from_labels(cls, x: np.ndarray, labels, q: int) -> "LabeledDataset":
        labels = np.asarray(labels, dtype=int)
        return cls(x=np.asarray(x, dtype=float), t=one_hot(labels, q), labels=labels)


def load_csv(path, label_column: str = "label", num_classes: int | None = None) -> LabeledDataset:
    """Load a header+rows CSV: float feature columns plus one integer label column."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if label_column not in header:
            raise DataError(f"{path}: no '{label_column}' column in header {header}")
        label_idx = header.index(label_column)
        feature_idx = [i for i in range(len(header)) if i != label_idx]
        if not feature_idx:
            raise DataError(f"{path}: no feature columns")
        rows, labels = [], []
        for rownum, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(f"{path}, row {rownum}: expected {len(header)} fields, got {len(row)}")
            try:
                labels.append(int(row[label_idx]))
            except ValueError:
                raise DataError(
                    f"{path}, row {rownum}, column '{label_column}': "
                    f"label {row[label_idx]!r} is not an integer"
                ) from None
            feats = []
            for i in feature_idx:
                try:
                    feats.append(float(row[i]))
                except ValueError:
                    raise DataError(
                        f"{path}, row {rownum}, column '{header[i]}': "
                        f"{row[i]!r} is not a number"
                    ) from None
            rows.append(feats)
    if not rows:
        raise DataError(f"{path}: no data rows")
    labels = np.asarray(labels, dtype=int)
    q = num_classes if num_classes is not None else int(labels.max()) + 1
    if labels.min() < 0 or labels.max() >= q:
        bad = int(np.argmax((labels < 0) | (labels >= q)))
        raise DataError(
            f"{path}, row {bad + 2}: label {labels[bad]} outside 0..{q - 1}"
        )
    return LabeledDataset.from_labels(np.asarray(rows, dtype=float).T, labels, q)


def save_csv(dataset: LabeledDataset, path, label_column: str = "label") -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"f{i}" for i in range(dataset.input_dim)] + [label_column])
        for j in range(dataset.num_samples):
            writer.writerow([repr(float(v)) for v in dataset.x[:, j]] + [int(dataset.labels[j])])


@dataclass(frozen=True)
class NormStats:
    policy: str
    mean: np.ndarray | None = None
    scale: np.ndarray | None = None


def normalize_features(x: np.ndarray, policy: str, stats: NormStats | None = None):
    """Apply a normalization policy; returns (x', stats).

    Stats are computed from x only when not supplied, so a test split can be
    transformed with the training split's statistics and never leaks.
    """
    x = np.asarray(x, dtype=float)
    if policy == "none":
        return x, NormStats(policy="none")
    if policy == "unit_norm":
        norms = np.linalg.norm(x, axis=0)
        safe = np.where(norms == 0.0, 1.0, norms)
        return x / safe, NormStats(policy="unit_norm")
    if policy == "zscore":
        if stats is None:
            mean = x.mean(axis=1)
            std = x.std(axis=1)
            flat = std == 0.0
            if np.any(flat):
                warnings.warn(
                    f"zscore: dimensions {np.flatnonzero(flat).tolist()} have zero "
                    "variance and are passed through unscaled"
                )
            scale = np.where(flat, 1.0, std)
            stats = NormStats(policy="zscore", mean=mean, scale=scale)
        elif stats.policy != "zscore":
            raise DataError(f"stats computed for policy {stats.policy!r}, not 'zscore'")
        return (x - stats.mean[:, None]) / stats.scale[:, None], stats
    raise DataError(f"unknown normalization policy {policy!r}")


def synthetic_blobs(p: int, q: int, j: int, separation: float, seed: int) -> LabeledDataset:
    """Q Gaussian clusters with unit noise; mean spread scales with `separation`.

    Class counts are as equal as possible; fully deterministic by seed.
    """
    if p < 1 or q < 1 or j < 1:
        raise DataError(f"invalid blob sizes p={p}, q={q}, j={j}")
    rng = np.random.default_rng(np.random.SeedSequence((seed, _BLOBS_STREAM)))
    means = separation * rng.standard_normal((q, p))
    labels = rng.permutation(np.arange(j) % q)
    x = means[labels].T + rng.standard_normal((p, j))
    return LabeledDataset.from_labels(x, labels, q)
