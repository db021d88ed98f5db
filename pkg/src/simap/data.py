"""Datasets: CSV ingestion, min-max normalization, splits and synthetic generators."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

XOR_ANCHORS = np.array(
    [[1, 1], [1.5, 1.5], [2.5, 2.5], [3, 3], [1, 3], [1.5, 2.5], [2.5, 1.5], [3, 1]], dtype=float
)
XOR_LABELS = np.array([0, 0, 0, 0, 1, 1, 1, 1])


class DataError(ValueError):
    pass


@dataclass
class LabeledDataset:
    points: np.ndarray  # (N, n)
    labels: np.ndarray  # (N,) ints in 0..c-1
    classes: Optional[int] = None
    feature_names: list = field(default_factory=list)
    label_values: list = field(default_factory=list)  # original label of each dense index

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.points.ndim != 2 or len(self.points) == 0:
            raise DataError("dataset needs a nonempty (N, n) point array")
        if len(self.labels) != len(self.points):
            raise DataError("points and labels differ in length")
        if self.labels.min() < 0:
            raise DataError("labels must be nonnegative")
        if self.classes is None:
            self.classes = int(self.labels.max()) + 1
        if self.labels.max() >= self.classes:
            raise DataError("label out of range for class count")
        if not self.feature_names:
            self.feature_names = [f"x{i}" for i in range(self.dim)]
        if not self.label_values:
            self.label_values = list(range(self.classes))

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def onehots(self) -> np.ndarray:
        return np.eye(self.classes)[self.labels]

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, index) -> "LabeledDataset":
        return LabeledDataset(
            self.points[index], self.labels[index], self.classes, list(self.feature_names), list(self.label_values)
        )


@dataclass(frozen=True)
class NormalizationTransform:
    shift: np.ndarray
    scale: np.ndarray

    def to_dict(self) -> dict:
        return {"shift": self.shift.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationTransform":
        return cls(np.array(d["shift"], dtype=float), np.array(d["scale"], dtype=float))

    def inverse(self, points) -> np.ndarray:
        return np.asarray(points, dtype=float) * self.scale + self.shift


def fit_normalizer(data) -> NormalizationTransform:
    """Per-dimension min-max map onto [0, 1]; constant dimensions go to 0.5."""
    points = data.points if isinstance(data, LabeledDataset) else np.asarray(data, dtype=float)
    if points.size == 0:
        raise DataError("cannot fit a normalizer on an empty dataset")
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    span = hi - lo
    flat = span == 0
    shift = np.where(flat, lo - 0.5, lo)
    scale = np.where(flat, 1.0, span)
    return NormalizationTransform(shift, scale)


def apply_normalizer(transform: NormalizationTransform, points, clamp: bool = True):
    """Returns (normalized points, mask of rows that fell outside [0, 1])."""
    points = np.asarray(points, dtype=float)
    if points.shape[-1] != len(transform.shift):
        raise DataError(f"expected {len(transform.shift)} features, got {points.shape[-1]}")
    out = (points - transform.shift) / transform.scale
    flagged = np.any((out < 0) | (out > 1), axis=-1)
    if clamp:
        out = np.clip(out, 0.0, 1.0)
    return out, flagged


def generate_xor(n_per_cluster: int = 1, noise_sd: float = 0.0, seed: int = 0) -> LabeledDataset:
    rng = np.random.default_rng(seed)
    points = np.repeat(XOR_ANCHORS, n_per_cluster, axis=0)
    labels = np.repeat(XOR_LABELS, n_per_cluster)
    if noise_sd > 0:
        points = points + rng.normal(0.0, noise_sd, size=points.shape)
    return LabeledDataset(points, labels, 2)


def generate_classification(
    n_samples: int = 500,
    n_features: int = 2,
    class_sep: float = 1.0,
    seed: int = 0,
    n_informative: int = 2,
    flip_y: float = 0.01,
) -> LabeledDataset:
    """Two Gaussian clusters at opposite hypercube corners of the informative subspace.

    Remaining features are standard normal noise.  Exactly
    ``round(flip_y * n_samples)`` points get their label redrawn uniformly.
    """
    if n_samples < 2 or n_features < 2:
        raise DataError("need n_samples >= 2 and n_features >= 2")
    rng = np.random.default_rng(seed)
    k = min(n_informative, n_features)
    labels = rng.permutation(np.arange(n_samples) % 2)
    sign = np.where(labels == 1, 1.0, -1.0)[:, None]
    points = rng.normal(size=(n_samples, n_features))
    points[:, :k] += class_sep * sign
    flip = rng.choice(n_samples, size=int(round(flip_y * n_samples)), replace=False)
    labels[flip] = rng.integers(0, 2, len(flip))
    return LabeledDataset(points, labels, 2)


def split(dataset: LabeledDataset, train_fraction: float = 0.8, seed: int = 0):
    if not 0 < train_fraction < 1:
        raise DataError("train_fraction must lie strictly between 0 and 1")
    order = np.random.default_rng(seed).permutation(len(dataset))
    cut = int(round(train_fraction * len(dataset)))
    return dataset.subset(np.sort(order[:cut])), dataset.subset(np.sort(order[cut:]))


def load_csv(path, label_column: str = "label", label_values: Optional[list] = None) -> LabeledDataset:
    """Read a header + rows CSV.  Labels are re-indexed densely by sorted value.

    ``label_values`` pins an existing mapping (dense index -> original label),
    e.g. the one stored with a trained model.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        header = [h.strip() for h in header]
        if label_column not in header:
            raise DataError(f"{path}: no label column {label_column!r}")
        li = header.index(label_column)
        features = [h for i, h in enumerate(header) if i != li]
        rows, raw_labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                rows.append([float(c) for i, c in enumerate(row) if i != li])
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric feature value") from None
            try:
                raw_labels.append(int(row[li]))
            except ValueError:
                raise DataError(f"{path}:{lineno}: label {row[li]!r} is not an integer") from None
    if not rows:
        raise DataError(f"{path}: no data rows")
    if label_values is None:
        label_values = sorted(set(raw_labels))
    index = {v: i for i, v in enumerate(label_values)}
    unknown = set(raw_labels) - set(index)
    if unknown:
        raise DataError(f"{path}: labels {sorted(unknown)} not in the label mapping")
    labels = [index[v] for v in raw_labels]
    return LabeledDataset(np.array(rows), np.array(labels), len(label_values), features, list(label_values))


def write_csv(dataset: LabeledDataset, path, label_column: str = "label") -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(dataset.feature_names) + [label_column])
        for x, y in zip(dataset.points, dataset.labels):
            w.writerow([repr(float(v)) for v in x] + [dataset.label_values[y]])
