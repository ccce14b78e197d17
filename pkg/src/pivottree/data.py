"""Datasets, distances and the instance-to-pivot mapping."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


class DataError(ValueError):
    """Raised when input data violates a structural invariant."""


class DistanceMetric(str, enum.Enum):
    EUCLIDEAN = "euclidean"

    @classmethod
    def parse(cls, value) -> "DistanceMetric":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise DataError(f"unknown distance metric: {value!r}") from None


@dataclass(frozen=True)
class LabeledDataset:
    """An ``n x m`` feature matrix with integer labels in ``0..c-1``."""

    X: np.ndarray
    y: np.ndarray
    ids: Optional[tuple] = None
    class_names: Optional[tuple] = None
    n_classes: int = field(default=0)

    def __post_init__(self):
        X = np.ascontiguousarray(np.asarray(self.X, dtype=np.float64))
        y = np.asarray(self.y)
        if X.ndim == 1:
            X = X.reshape(1, -1) if X.size else X.reshape(0, 0)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise DataError("dataset needs at least one instance with at least one feature")
        if not np.all(np.isfinite(X)):
            raise DataError("feature values must be finite")
        if y.shape != (X.shape[0],):
            raise DataError(f"got {X.shape[0]} instances but {y.size} labels")
        if not np.issubdtype(y.dtype, np.integer):
            if not np.all(np.equal(np.mod(y, 1), 0)):
                raise DataError("labels must be integer class ids")
        y = y.astype(np.intp)
        if y.min() < 0:
            raise DataError("labels must be non-negative")
        c = self.n_classes
        if self.class_names is not None:
            names = tuple(str(s) for s in self.class_names)
            object.__setattr__(self, "class_names", names)
            c = max(c, len(names))
        c = max(c, int(y.max()) + 1)
        if self.class_names is not None and len(self.class_names) != c:
            raise DataError(f"labels reach class {c - 1} but only {len(self.class_names)} class names given")
        if self.ids is not None:
            ids = tuple(str(s) for s in self.ids)
            if len(ids) != X.shape[0]:
                raise DataError("ids must have one entry per instance")
            if len(set(ids)) != len(ids):
                raise DataError("instance ids must be unique")
            object.__setattr__(self, "ids", ids)
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "n_classes", c)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def m(self) -> int:
        return self.X.shape[1]

    def subset(self, indices) -> "LabeledDataset":
        indices = np.asarray(indices, dtype=np.intp)
        ids = None if self.ids is None else tuple(self.ids[i] for i in indices)
        return LabeledDataset(self.X[indices], self.y[indices], ids=ids,
                              class_names=self.class_names, n_classes=self.n_classes)


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    return np.ascontiguousarray(X)


def distances_to(X, p, metric=DistanceMetric.EUCLIDEAN) -> np.ndarray:
    """Distances from every row of ``X`` to the single vector ``p``.

    This is the only place distances are computed. Batch and single-row calls
    reduce each row identically, so a value seen during training is bit-equal
    to the value recomputed at prediction time.
    """
    DistanceMetric.parse(metric)
    X = _as_matrix(X)
    p = np.asarray(p, dtype=np.float64).ravel()
    if X.shape[1] != p.shape[0]:
        raise DataError(f"dimension mismatch: {X.shape[1]} vs {p.shape[0]}")
    diff = X - p
    return np.sqrt((diff * diff).sum(axis=1))


def euclidean_distance(a: Sequence[float], b: Sequence[float]) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise DataError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    return float(distances_to(a, b)[0])


def pairwise_distances(X, metric=DistanceMetric.EUCLIDEAN) -> np.ndarray:
    """Symmetric ``n x n`` distance matrix with an exact zero diagonal."""
    X = _as_matrix(X)
    n = X.shape[0]
    D = np.empty((n, n), dtype=np.float64)
    for i in range(n):
        D[i] = distances_to(X, X[i], metric)
    return D


def pairwise_distance_matrix(data: LabeledDataset, metric=DistanceMetric.EUCLIDEAN) -> np.ndarray:
    return pairwise_distances(data.X, metric)


@dataclass(frozen=True)
class PivotSpace:
    """Pivots plus the ``n x k`` matrix of instance-to-pivot distances."""

    pivots: np.ndarray
    mapping: np.ndarray
    metric: DistanceMetric = DistanceMetric.EUCLIDEAN
    source_indices: Optional[tuple] = None
    labels: Optional[tuple] = None

    @property
    def k(self) -> int:
        return self.pivots.shape[0]


def map_to_pivots(X, pivots, metric=DistanceMetric.EUCLIDEAN) -> np.ndarray:
    X = _as_matrix(X)
    P = np.asarray(pivots, dtype=np.float64)
    if P.ndim == 1:
        P = P.reshape(1, -1)
    if P.shape[0] == 0:
        raise DataError("pivot list is empty")
    if P.shape[1] != X.shape[1]:
        raise DataError(f"dimension mismatch: instances have {X.shape[1]} features, pivots {P.shape[1]}")
    Z = np.empty((X.shape[0], P.shape[0]), dtype=np.float64)
    for j in range(P.shape[0]):
        Z[:, j] = distances_to(X, P[j], metric)
    return Z


def map_to_pivot_space(data, pivots, metric=DistanceMetric.EUCLIDEAN) -> PivotSpace:
    """Represent each instance by its distances to ``pivots``.

    ``data`` may be a :class:`LabeledDataset`, a matrix, or a single vector
    (which yields a ``1 x k`` mapping). ``pivots`` may be a matrix or a list
    of pivot records carrying ``vector``/``source_index``/``label``.
    """
    metric = DistanceMetric.parse(metric)
    X = data.X if isinstance(data, LabeledDataset) else data
    source_indices = labels = None
    if len(pivots) and hasattr(pivots[0], "vector"):
        source_indices = tuple(p.source_index for p in pivots)
        labels = tuple(p.label for p in pivots)
        pivots = np.array([p.vector for p in pivots], dtype=np.float64)
    P = np.asarray(pivots, dtype=np.float64)
    Z = map_to_pivots(X, P, metric)
    return PivotSpace(pivots=P.reshape(Z.shape[1], -1), mapping=Z, metric=metric,
                      source_indices=source_indices, labels=labels)


def train_test_split(data: LabeledDataset, test_fraction: float, seed: int = 0):
    """Stratified shuffle split; returns ``(train, test)`` index arrays.

    Each class contributes ``round(test_fraction * n_class)`` instances to the
    test side, keeping at least one on the train side when possible.
    """
    if not 0.0 < test_fraction < 1.0:
        raise DataError("test_fraction must lie strictly between 0 and 1")
    rng = np.random.default_rng(seed)
    train, test = [], []
    for c in range(data.n_classes):
        members = np.flatnonzero(data.y == c)
        if members.size == 0:
            continue
        members = rng.permutation(members)
        n_test = int(round(test_fraction * members.size))
        n_test = min(n_test, members.size - 1) if members.size > 1 else 0
        test.extend(members[:n_test].tolist())
        train.extend(members[n_test:].tolist())
    return np.array(sorted(train), dtype=np.intp), np.array(sorted(test), dtype=np.intp)
