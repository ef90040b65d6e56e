"""Incremental classifiers that feed the voting ensemble.

Both learners consume one labeled record at a time and score any feature
vector into a valid probability vector, uniform before any training.
Scoring never mutates state and never produces NaN/Inf, whatever the
feature magnitudes.
"""

from __future__ import annotations

import abc
import math

import numpy as np

from .errors import ConfigurationError, DimensionError
from .geometry import ScoreVector
from .streams import StreamRecord

# Log-domain prior assigned to classes never seen in training; small
# enough to lose against any trained class under ordinary inputs, finite
# so the softmax stays well defined.
PRIOR_FLOOR = 1e-12
# Densities on (near-)constant features would otherwise divide by zero.
VARIANCE_FLOOR = 1e-9

_LOG_2PI = math.log(2.0 * math.pi)


class IncrementalLearner(abc.ABC):
    """One-pass classifier contract used by the ensemble."""

    def __init__(self, n_features: int, n_classes: int):
        if n_features < 1:
            raise ConfigurationError("n_features must be positive")
        if n_classes < 2:
            raise ConfigurationError("n_classes must be at least 2")
        self.n_features = n_features
        self.n_classes = n_classes

    def _check_features(self, features) -> np.ndarray:
        arr = np.asarray(features, dtype=np.float64)
        if arr.shape != (self.n_features,):
            raise DimensionError(
                f"expected {self.n_features} features, got shape {arr.shape}"
            )
        return arr

    def _check_label(self, label: int) -> int:
        if not (0 <= label < self.n_classes):
            raise DimensionError(
                f"label {label} outside [0, {self.n_classes})"
            )
        return label

    @abc.abstractmethod
    def train_one(self, record: StreamRecord) -> None:
        """Fold one labeled record into the model."""

    @abc.abstractmethod
    def score(self, features) -> ScoreVector:
        """Class scores for a feature vector; read-only."""

    @abc.abstractmethod
    def reset(self) -> None:
        """Back to the untrained state."""


class GaussianNaiveBayes(IncrementalLearner):
    """Incremental Gaussian naive Bayes.

    Per class and feature, mean and variance are maintained with Welford
    accumulators (sample variance, n-1 denominator). Scores combine
    count-proportional log-priors with per-feature Gaussian log-densities
    (variance floored at VARIANCE_FLOOR) through a shifted softmax.
    Classes with no observations yet enter the softmax at the constant
    PRIOR_FLOOR with no density term.
    """

    def __init__(self, n_features: int, n_classes: int):
        super().__init__(n_features, n_classes)
        self.reset()

    def reset(self) -> None:
        self._counts = np.zeros(self.n_classes)
        self._means = np.zeros((self.n_classes, self.n_features))
        self._m2 = np.zeros((self.n_classes, self.n_features))
        self._total = 0

    @property
    def class_counts(self) -> np.ndarray:
        return self._counts.copy()

    def mean_for(self, label: int) -> np.ndarray:
        return self._means[self._check_label(label)].copy()

    def variance_for(self, label: int) -> np.ndarray:
        """Sample variance per feature (zeros until a class has 2 records)."""
        y = self._check_label(label)
        n = self._counts[y]
        if n < 2:
            return np.zeros(self.n_features)
        return self._m2[y] / (n - 1.0)

    def train_one(self, record: StreamRecord) -> None:
        x = self._check_features(record.features)
        y = self._check_label(record.label_index)
        self._counts[y] += 1.0
        self._total += 1
        n = self._counts[y]
        delta = x - self._means[y]
        self._means[y] += delta / n
        self._m2[y] += delta * (x - self._means[y])

    def score(self, features) -> ScoreVector:
        x = self._check_features(features)
        if self._total == 0:
            return ScoreVector._from_normalized(
                np.full(self.n_classes, 1.0 / self.n_classes)
            )
        counts = self._counts
        seen = counts > 0.0
        log_scores = np.full(self.n_classes, math.log(PRIOR_FLOOR))
        n = counts[seen][:, None]
        variances = np.maximum(
            np.where(n > 1.0, self._m2[seen] / np.maximum(n - 1.0, 1.0), 0.0),
            VARIANCE_FLOOR,
        )
        diff = x - self._means[seen]
        log_density = -0.5 * np.sum(
            _LOG_2PI + np.log(variances) + diff * diff / variances, axis=1
        )
        log_scores[seen] = np.log(counts[seen] / self._total) + log_density
        shifted = np.exp(log_scores - log_scores.max())
        return ScoreVector._from_normalized(shifted / shifted.sum())


def hoeffding_bound(value_range: float, confidence: float, n: int) -> float:
    """epsilon = sqrt(R^2 * ln(1/delta) / (2n)).

    The half-width that the observed gain advantage must exceed before a
    split decision counts as statistically safe at confidence delta.
    """
    if value_range <= 0.0:
        raise ConfigurationError("value_range must be positive")
    if not (0.0 < confidence < 1.0):
        raise ConfigurationError("confidence must be in (0, 1)")
    if n < 1:
        raise ConfigurationError("n must be positive")
    return math.sqrt(value_range * value_range * math.log(1.0 / confidence) / (2.0 * n))


class _Split:
    __slots__ = ("feature", "threshold", "left", "right")

    def __init__(self, feature: int, threshold: float, left, right):
        self.feature = feature
        self.threshold = threshold
        self.left = left
        self.right = right


class _Leaf:
    __slots__ = (
        "class_counts", "n_seen", "buffer", "frozen",
        "lo", "width", "inv_width", "valid", "hist",
    )

    def __init__(self, n_classes: int):
        self.class_counts = np.zeros(n_classes)
        self.n_seen = 0
        self.buffer = []
        self.frozen = False
        self.lo = None
        self.width = None
        self.inv_width = None
        self.valid = None
        self.hist = None


class HoeffdingTree(IncrementalLearner):
    """Incremental decision tree with Hoeffding-bound split decisions.

    Numeric features only, binary splits. Each leaf buffers its first
    grace_period records, then freezes an equal-width n_bins histogram
    per feature over the buffered range; later records only update the
    histograms. Every grace_period records at a leaf, the best and
    second-best attributes by information gain are compared against the
    Hoeffding bound (R = log2(n_classes)); the leaf splits when the gain
    lead exceeds the bound or the bound has shrunk below tie_threshold.
    Candidate thresholds are the interior histogram edges; values outside
    a frozen range clamp to the edge bins. Leaves score by
    Laplace-smoothed class frequencies.
    """

    def __init__(
        self,
        n_features: int,
        n_classes: int,
        *,
        split_confidence: float = 1e-7,
        tie_threshold: float = 0.05,
        grace_period: int = 200,
        n_bins: int = 10,
    ):
        super().__init__(n_features, n_classes)
        if not (0.0 < split_confidence < 1.0):
            raise ConfigurationError("split_confidence must be in (0, 1)")
        if tie_threshold < 0.0:
            raise ConfigurationError("tie_threshold must be non-negative")
        if grace_period < 1:
            raise ConfigurationError("grace_period must be positive")
        if n_bins < 2:
            raise ConfigurationError("n_bins must be at least 2")
        self.split_confidence = split_confidence
        self.tie_threshold = tie_threshold
        self.grace_period = grace_period
        self.n_bins = n_bins
        self._value_range = math.log2(n_classes)
        self._feature_idx = np.arange(n_features)
        self.reset()

    def reset(self) -> None:
        self._root = _Leaf(self.n_classes)
        self._n_splits = 0

    @property
    def n_splits(self) -> int:
        return self._n_splits

    def _route(self, x: np.ndarray):
        node = self._root
        while type(node) is _Split:
            node = node.left if x[node.feature] <= node.threshold else node.right
        return node

    def train_one(self, record: StreamRecord) -> None:
        x = self._check_features(record.features)
        y = self._check_label(record.label_index)
        parent = None
        is_left = False
        node = self._root
        while type(node) is _Split:
            parent = node
            is_left = x[node.feature] <= node.threshold
            node = node.left if is_left else node.right
        node.class_counts[y] += 1.0
        node.n_seen += 1
        if not node.frozen:
            node.buffer.append((x, y))
            if node.n_seen >= self.grace_period:
                self._freeze(node)
                self._maybe_split(node, parent, is_left)
        else:
            # minimum/maximum instead of np.clip: this runs once per
            # component per instance and the clip wrapper overhead shows.
            bins = np.minimum(
                np.maximum(((x - node.lo) * node.inv_width).astype(np.int64), 0),
                self.n_bins - 1,
            )
            node.hist[self._feature_idx, bins, y] += 1.0
            if node.n_seen % self.grace_period == 0:
                self._maybe_split(node, parent, is_left)

    def _freeze(self, leaf: _Leaf) -> None:
        xs = np.array([pair[0] for pair in leaf.buffer])
        ys = np.array([pair[1] for pair in leaf.buffer])
        lo = xs.min(axis=0)
        hi = xs.max(axis=0)
        width = (hi - lo) / self.n_bins
        valid = width > 0.0
        inv_width = np.where(valid, 1.0 / np.where(valid, width, 1.0), 0.0)
        hist = np.zeros((self.n_features, self.n_bins, self.n_classes))
        bins = np.clip(((xs - lo) * inv_width).astype(np.int64), 0, self.n_bins - 1)
        feature_grid = np.broadcast_to(self._feature_idx, bins.shape)
        np.add.at(hist, (feature_grid, bins, ys[:, None]), 1.0)
        leaf.lo = lo
        leaf.width = width
        leaf.inv_width = inv_width
        leaf.valid = valid
        leaf.hist = hist
        leaf.buffer = []
        leaf.frozen = True

    @staticmethod
    def _nlog2(values: np.ndarray) -> np.ndarray:
        # v * log2(v) with the 0 log 0 = 0 convention (counts are integral).
        return values * np.log2(np.maximum(values, 1.0))

    def _best_splits(self, leaf: _Leaf):
        counts = leaf.class_counts
        n = leaf.n_seen
        left = np.cumsum(leaf.hist, axis=1)[:, :-1, :]
        right = counts[None, None, :] - left
        left_n = left.sum(axis=2)
        right_n = right.sum(axis=2)
        child_bits = (
            self._nlog2(left_n) - self._nlog2(left).sum(axis=2)
            + self._nlog2(right_n) - self._nlog2(right).sum(axis=2)
        )
        root_entropy = (n * math.log2(n) - self._nlog2(counts).sum()) / n
        gains = root_entropy - child_bits / n
        usable = leaf.valid[:, None] & (left_n > 0.0) & (right_n > 0.0)
        gains = np.where(usable, gains, -np.inf)
        per_feature_best = gains.max(axis=1)
        best_feature = int(np.argmax(per_feature_best))
        best_gain = float(per_feature_best[best_feature])
        if not math.isfinite(best_gain):
            return 0.0, None, 0.0, 0.0
        runner_up = np.delete(per_feature_best, best_feature)
        finite_runner = float(runner_up.max()) if runner_up.size else -math.inf
        # The do-nothing option competes with zero gain.
        second_gain = max(finite_runner, 0.0)
        edge = int(np.argmax(gains[best_feature]))
        threshold = float(leaf.lo[best_feature] + leaf.width[best_feature] * (edge + 1))
        return best_gain, best_feature, threshold, second_gain

    def _maybe_split(self, leaf: _Leaf, parent, is_left: bool) -> None:
        if np.count_nonzero(leaf.class_counts) < 2:
            return
        best_gain, feature, threshold, second_gain = self._best_splits(leaf)
        if feature is None or best_gain <= 0.0:
            return
        epsilon = hoeffding_bound(self._value_range, self.split_confidence, leaf.n_seen)
        if (best_gain - second_gain > epsilon) or (epsilon < self.tie_threshold):
            split = _Split(
                feature, threshold, _Leaf(self.n_classes), _Leaf(self.n_classes)
            )
            if parent is None:
                self._root = split
            elif is_left:
                parent.left = split
            else:
                parent.right = split
            self._n_splits += 1

    def score(self, features) -> ScoreVector:
        x = self._check_features(features)
        leaf = self._route(x)
        return ScoreVector._from_normalized(
            (leaf.class_counts + 1.0) / (leaf.n_seen + self.n_classes)
        )


LEARNER_KINDS = {
    "ht": HoeffdingTree,
    "nb": GaussianNaiveBayes,
}


def make_learner(kind: str, n_features: int, n_classes: int, **options) -> IncrementalLearner:
    """Instantiate a learner by its registry kind ("ht" or "nb")."""
    try:
        factory = LEARNER_KINDS[kind]
    except KeyError:
        raise ConfigurationError(f"unknown learner kind {kind!r}") from None
    return factory(n_features, n_classes, **options)
