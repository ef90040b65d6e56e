"""Least-squares component weighting from accumulated vote geometry.

Over a window of labeled instances, ask for the component weights whose
weighted vote aggregate lands as close as possible (summed squared
Euclidean loss) to each instance's one-hot label corner. Setting the
gradient to zero yields a square symmetric linear system

    lam @ w = gamma

where lam[q, j] accumulates the inner products between the score vectors
of components q and j, and gamma[q] the inner products between component
q's scores and the one-hot truth. Both accumulate additively per
instance, so a sliding window just rebuilds the system from its current
contents.

lam is a Gram matrix: symmetric, positive semi-definite, and singular
whenever component votes are linearly dependent (in particular when all
components agree, or when there are more components than classes on a
single instance). Near-singular systems are Tikhonov-damped with a scale
proportional to the mean diagonal, which approximates the minimum-norm
solution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, EmptySystemError, NumericError
from .geometry import ScorePolytope, WeightVector

# Below this singular-value ratio the system counts as rank-deficient and
# the solve is damped.
RANK_RATIO_THRESHOLD = 1e-10
# Damping scale relative to the mean diagonal of lam.
REGULARIZATION_SCALE = 1e-10


@dataclass
class NormalSystem:
    """Accumulated normal equations for one ensemble of m components."""

    m: int
    lam: np.ndarray = field(repr=False)
    gamma: np.ndarray = field(repr=False)
    instances_seen: int = 0

    @classmethod
    def empty(cls, m: int) -> "NormalSystem":
        if m < 1:
            raise DimensionError("a normal system needs at least one component")
        return cls(m=m, lam=np.zeros((m, m)), gamma=np.zeros(m))

    @classmethod
    def from_scores(cls, scores: np.ndarray, ideals: np.ndarray) -> "NormalSystem":
        """Build a system in one shot from stacked per-instance votes.

        scores has shape (n_instances, m, p); ideals holds the matching
        one-hot rows, shape (n_instances, p). Equivalent to accumulating
        instance by instance, just cheaper for window rebuilds.
        """
        scores = np.asarray(scores, dtype=np.float64)
        ideals = np.asarray(ideals, dtype=np.float64)
        if scores.ndim != 3 or ideals.ndim != 2:
            raise DimensionError("expected scores (n, m, p) and ideals (n, p)")
        if scores.shape[0] != ideals.shape[0] or scores.shape[2] != ideals.shape[1]:
            raise DimensionError(
                f"shape mismatch: scores {scores.shape}, ideals {ideals.shape}"
            )
        n, m, _ = scores.shape
        lam = np.einsum("iqk,ijk->qj", scores, scores)
        gamma = np.einsum("iqk,ik->q", scores, ideals)
        return cls(m=m, lam=lam, gamma=gamma, instances_seen=n)


def accumulate(system: NormalSystem, polytope: ScorePolytope) -> NormalSystem:
    """Fold one labeled instance into the system (mutates and returns it)."""
    if polytope.ideal is None:
        raise DimensionError("accumulation needs a polytope with its ideal point")
    s = polytope.matrix
    if s.shape[0] != system.m:
        raise DimensionError(
            f"polytope has {s.shape[0]} components, system expects {system.m}"
        )
    system.lam += s @ s.T
    system.gamma += s @ polytope.ideal.point
    system.instances_seen += 1
    return system


def rank_diagnostics(system: NormalSystem) -> tuple[int, float]:
    """Numerical rank of lam and its smallest/largest singular-value ratio.

    Singular values below RANK_RATIO_THRESHOLD times the largest do not
    count toward the rank. An all-zero matrix reports rank 0, ratio 0.
    """
    sv = np.linalg.svd(system.lam, compute_uv=False)
    largest = float(sv[0]) if sv.size else 0.0
    if largest <= 0.0:
        return 0, 0.0
    rank = int(np.count_nonzero(sv > RANK_RATIO_THRESHOLD * largest))
    return rank, float(sv[-1] / largest)


@dataclass(frozen=True)
class WeightSolution:
    """A solved weight vector plus the diagnostics behind it."""

    weights: WeightVector
    mode: str
    rank: int
    singular_ratio: float
    regularization: float
    instances_seen: int


def _project_to_simplex(w: np.ndarray) -> np.ndarray:
    # Clip negatives, renormalize; if nothing positive survives, fall back
    # to uniform rather than divide by zero.
    clipped = np.clip(w, 0.0, None)
    total = clipped.sum()
    if total <= 0.0:
        return np.full(w.size, 1.0 / w.size)
    return clipped / total


def solve(system: NormalSystem, mode: str = "raw") -> WeightSolution:
    """Solve the accumulated system for component weights.

    mode "raw" returns the unconstrained least-squares solution; mode
    "simplex" clips negatives and renormalizes to sum one (uniform if no
    weight stays positive).
    """
    if mode not in ("raw", "simplex"):
        raise DimensionError(f"unknown weight mode {mode!r}")
    if system.instances_seen == 0:
        raise EmptySystemError("cannot solve before any instance was accumulated")
    if not (np.all(np.isfinite(system.lam)) and np.all(np.isfinite(system.gamma))):
        raise NumericError("normal system contains non-finite entries")

    rank, ratio = rank_diagnostics(system)
    lam = system.lam
    regularization = 0.0
    if ratio < RANK_RATIO_THRESHOLD:
        regularization = REGULARIZATION_SCALE * float(np.trace(lam)) / system.m
        lam = lam + regularization * np.eye(system.m)
    try:
        w = np.linalg.solve(lam, system.gamma)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"weight solve failed: {exc}") from exc
    if not np.all(np.isfinite(w)):
        raise NumericError("weight solve produced non-finite weights")

    if mode == "simplex":
        weights = WeightVector(_project_to_simplex(w), "simplex")
    else:
        weights = WeightVector(w, "raw")
    return WeightSolution(
        weights=weights,
        mode=mode,
        rank=rank,
        singular_ratio=ratio,
        regularization=regularization,
        instances_seen=system.instances_seen,
    )
