"""Spatial model of ensemble voting.

A classifier's vote on one instance is a point on the probability simplex
in p-dimensional class space (a score vector). The m votes of an ensemble
span a polytope in that space, and the true label sits at a one-hot corner
of the simplex (the ideal point). Unweighted majority voting aggregates
the polytope to its centroid; weighted majority voting to a weighted
combination of its vertices. Vote quality is Euclidean distance to the
ideal point, so "better" always means geometrically closer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, EmptyEnsembleError

# Slack allowed when checking that probabilities sum to one.
PROBABILITY_SUM_TOL = 1e-9


def _as_float_vector(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be one-dimensional, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class ScoreVector:
    """One classifier's per-class vote: non-negative scores summing to one.

    Scores are validated, never renormalized; a vector whose sum strays
    further than PROBABILITY_SUM_TOL from one is the caller's bug.
    """

    scores: np.ndarray

    def __post_init__(self):
        arr = _as_float_vector(self.scores, "scores")
        if arr.size < 2:
            raise DimensionError("a score vector needs at least two classes")
        if not np.all(np.isfinite(arr)):
            raise DimensionError("score vector contains non-finite entries")
        if arr.min() < 0.0:
            raise DimensionError("score vector contains negative entries")
        total = float(arr.sum())
        if abs(total - 1.0) > PROBABILITY_SUM_TOL:
            raise DimensionError(f"score vector sums to {total!r}, expected 1")
        object.__setattr__(self, "scores", arr)

    @property
    def n_classes(self) -> int:
        return self.scores.size

    @classmethod
    def _from_normalized(cls, scores: np.ndarray) -> "ScoreVector":
        # Fast path for internal callers whose output is normalized by
        # construction (softmax, Laplace frequencies); skips validation,
        # which dominates the per-instance cost in large ensembles.
        vector = object.__new__(cls)
        object.__setattr__(vector, "scores", scores)
        return vector


@dataclass(frozen=True)
class IdealPoint:
    """The one-hot corner of the simplex matching the true class label."""

    point: np.ndarray
    label_index: int

    def __post_init__(self):
        arr = _as_float_vector(self.point, "point")
        if arr.size < 2:
            raise DimensionError("an ideal point needs at least two classes")
        if not (0 <= self.label_index < arr.size):
            raise DimensionError(
                f"label index {self.label_index} out of range for {arr.size} classes"
            )
        expected = np.zeros(arr.size)
        expected[self.label_index] = 1.0
        if not np.array_equal(arr, expected):
            raise DimensionError("ideal point must be one-hot at the label index")
        object.__setattr__(self, "point", arr)

    @classmethod
    def from_label(cls, label_index: int, n_classes: int) -> "IdealPoint":
        if n_classes < 2:
            raise DimensionError("an ideal point needs at least two classes")
        if not (0 <= label_index < n_classes):
            raise DimensionError(
                f"label index {label_index} out of range for {n_classes} classes"
            )
        point = np.zeros(n_classes)
        point[label_index] = 1.0
        return cls(point, label_index)

    @property
    def n_classes(self) -> int:
        return self.point.size


@dataclass(frozen=True)
class ScorePolytope:
    """The votes of one ensemble on one instance, plus (optionally) the truth.

    The ideal point is optional because at prediction time the true label
    does not exist yet; operations that need the truth (weight
    accumulation) refuse polytopes without it. A single row is a legal,
    degenerate polytope; zero rows are constructible but cannot be
    aggregated.
    """

    rows: tuple
    ideal: IdealPoint | None = None

    def __post_init__(self):
        rows = tuple(self.rows)
        for row in rows:
            if not isinstance(row, ScoreVector):
                raise DimensionError("polytope rows must be ScoreVector instances")
        if rows:
            try:
                matrix = np.stack([row.scores for row in rows])
            except ValueError as exc:
                raise DimensionError(
                    "polytope rows disagree on the number of classes"
                ) from exc
        else:
            matrix = np.empty((0, 0))
        if self.ideal is not None and rows and matrix.shape[1] != self.ideal.n_classes:
            raise DimensionError(
                f"ideal point has {self.ideal.n_classes} classes, rows have {matrix.shape[1]}"
            )
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "_matrix", matrix)

    @property
    def matrix(self) -> np.ndarray:
        """Row-stacked scores, shape (n_components, n_classes)."""
        return self._matrix

    @property
    def n_components(self) -> int:
        return len(self.rows)

    @property
    def n_classes(self) -> int:
        if not self.rows:
            raise EmptyEnsembleError("empty polytope has no class dimension")
        return self._matrix.shape[1]


@dataclass(frozen=True)
class WeightVector:
    """Per-component aggregation weights.

    mode "raw" admits any finite weights (negative included); mode
    "simplex" requires non-negative entries summing to one.
    """

    weights: np.ndarray
    mode: str = "raw"

    def __post_init__(self):
        arr = _as_float_vector(self.weights, "weights")
        if arr.size == 0:
            raise DimensionError("weight vector must not be empty")
        if not np.all(np.isfinite(arr)):
            raise DimensionError("weight vector contains non-finite entries")
        if self.mode not in ("raw", "simplex"):
            raise DimensionError(f"unknown weight mode {self.mode!r}")
        if self.mode == "simplex":
            if arr.min() < 0.0:
                raise DimensionError("simplex weights must be non-negative")
            total = float(arr.sum())
            if abs(total - 1.0) > PROBABILITY_SUM_TOL:
                raise DimensionError(f"simplex weights sum to {total!r}, expected 1")
        object.__setattr__(self, "weights", arr)

    @classmethod
    def uniform(cls, n_components: int, mode: str = "simplex") -> "WeightVector":
        if n_components < 1:
            raise DimensionError("need at least one component for uniform weights")
        return cls(np.full(n_components, 1.0 / n_components), mode)

    @property
    def n_components(self) -> int:
        return self.weights.size


def loss(point, ideal) -> float:
    """Euclidean distance between an aggregated vote and an ideal point."""
    a = np.asarray(point, dtype=np.float64)
    b = ideal.point if isinstance(ideal, IdealPoint) else np.asarray(ideal, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"length mismatch: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))


def centroid(polytope: ScorePolytope) -> np.ndarray:
    """Unweighted vote aggregation: the mean of the polytope's rows."""
    if polytope.n_components == 0:
        raise EmptyEnsembleError("cannot aggregate an empty polytope")
    return polytope.matrix.mean(axis=0)


def weighted_centroid(polytope: ScorePolytope, weights: WeightVector) -> np.ndarray:
    """Weighted vote aggregation: weights @ rows.

    Raw-mode weights may push the result off the simplex; that is
    intentional, the aggregate is still ranked by argmax.
    """
    if polytope.n_components == 0:
        raise EmptyEnsembleError("cannot aggregate an empty polytope")
    w = weights.weights
    if w.size != polytope.n_components:
        raise DimensionError(
            f"{w.size} weights for {polytope.n_components} components"
        )
    return w @ polytope.matrix


def predict_label(aggregated) -> int:
    """Index of the largest aggregated score; ties go to the lowest index."""
    arr = np.asarray(aggregated, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise DimensionError("aggregated vote must be a non-empty vector")
    return int(np.argmax(arr))
