"""Fixed-size voting ensembles over the incremental-learner contract.

Training uses online bagging: each component draws its replication count
for every record from a Poisson(lambda) on its own dedicated PRNG
substream (lambda = 0 short-circuits to exactly-once training with no
randomness). Prediction stacks the component score vectors into a score
polytope and aggregates by plain centroid (mv) or by the current
least-squares weights (wmv), refreshed from a sliding instance window.

The lambda = 6 scenarios approximate leveraging bagging by resampling
only: there is no drift detector and no output-code randomization here,
deliberately, so accuracy parity with full leveraging-bagging
implementations is out of scope. Diversity between components is
measured with the Yule Q statistic over correctness indicators.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import ComponentError, ConfigurationError, DimensionError
from .geometry import (
    ScorePolytope,
    ScoreVector,
    WeightVector,
    centroid,
    predict_label,
    weighted_centroid,
)
from .learners import make_learner
from .streams import Rng, StreamRecord, derive_seed
from .weights import NormalSystem, WeightSolution, solve

_AGGREGATIONS = ("mv", "wmv")


@dataclass(frozen=True)
class EnsembleConfig:
    """Static shape of one ensemble.

    learners may be a single registry kind (expanded to every slot) or an
    explicit per-slot tuple for hybrids. refresh_period counts instances
    between weight solves under wmv; 1 means solve every instance.
    """

    size: int
    learners: tuple[str, ...] = "ht"
    aggregation: str = "mv"
    bagging_lambda: float = 0.0
    window_length: int = 500
    weight_mode: str = "simplex"
    refresh_period: int = 1

    def __post_init__(self):
        if self.size < 2:
            raise ConfigurationError("ensemble size must be at least 2")
        learners = self.learners
        if isinstance(learners, str):
            learners = (learners,) * self.size
        else:
            learners = tuple(learners)
        if len(learners) != self.size:
            raise ConfigurationError(
                f"{len(learners)} learner kinds for size {self.size}"
            )
        object.__setattr__(self, "learners", learners)
        if self.aggregation not in _AGGREGATIONS:
            raise ConfigurationError(f"unknown aggregation {self.aggregation!r}")
        if self.bagging_lambda < 0.0:
            raise ConfigurationError("bagging_lambda must be non-negative")
        if self.window_length < 1:
            raise ConfigurationError("window_length must be at least 1")
        if self.weight_mode not in ("raw", "simplex"):
            raise ConfigurationError(f"unknown weight mode {self.weight_mode!r}")
        if self.refresh_period < 1:
            raise ConfigurationError("refresh_period must be at least 1")


@dataclass(frozen=True)
class EnsemblePrediction:
    """One prediction: label, aggregated vector, the polytope behind it,
    and the raw score matrix of every pooled component (the training side
    stores these so window scores are exactly prediction-time scores)."""

    label: int
    aggregated: np.ndarray
    polytope: ScorePolytope
    component_scores: np.ndarray


def _score_all(components, features) -> list[ScoreVector]:
    rows = []
    for j, component in enumerate(components):
        try:
            rows.append(component.score(features))
        except Exception as exc:
            raise ComponentError(j, f"score failed: {exc}") from exc
    return rows


def _one_hot_rows(labels, n_classes: int) -> np.ndarray:
    ideals = np.zeros((len(labels), n_classes))
    ideals[np.arange(len(labels)), labels] = 1.0
    return ideals


class VotingEnsemble:
    """m components trained online, aggregated by mv or wmv."""

    def __init__(
        self,
        config: EnsembleConfig,
        n_features: int,
        n_classes: int,
        seed: int = 0,
        learner_options: dict | None = None,
    ):
        options = learner_options or {}
        self.config = config
        self.n_features = n_features
        self.n_classes = n_classes
        self.seed = seed
        self._components = tuple(
            make_learner(kind, n_features, n_classes, **options.get(kind, {}))
            for kind in config.learners
        )
        # One substream per component; never keyed by aggregation mode, so
        # mv and wmv runs over one stream share identical training.
        self._rngs = tuple(
            Rng(derive_seed(seed, "bagging", j)) for j in range(config.size)
        )
        self._window = deque(maxlen=config.window_length)
        self._solution: WeightSolution | None = None
        self._seen = 0

    @property
    def components(self) -> tuple:
        return self._components

    @property
    def window(self) -> deque:
        return self._window

    @property
    def weight_solution(self) -> WeightSolution | None:
        return self._solution

    def current_weights(self) -> WeightVector:
        if self._solution is not None:
            return self._solution.weights
        return WeightVector.uniform(self.config.size, self.config.weight_mode)

    def predict(self, features) -> EnsemblePrediction:
        rows = _score_all(self._components, features)
        polytope = ScorePolytope(tuple(rows))
        if self.config.aggregation == "mv":
            aggregated = centroid(polytope)
        else:
            aggregated = weighted_centroid(polytope, self.current_weights())
        return EnsemblePrediction(
            label=predict_label(aggregated),
            aggregated=aggregated,
            polytope=polytope,
            component_scores=polytope.matrix,
        )

    def train_one(self, record: StreamRecord, component_scores=None) -> None:
        if component_scores is None:
            component_scores = np.stack(
                [row.scores for row in _score_all(self._components, record.features)]
            )
        else:
            component_scores = np.asarray(component_scores, dtype=np.float64)
            if component_scores.shape != (self.config.size, self.n_classes):
                raise DimensionError(
                    f"component_scores shape {component_scores.shape}, "
                    f"expected {(self.config.size, self.n_classes)}"
                )
        lam = self.config.bagging_lambda
        for j, component in enumerate(self._components):
            if lam == 0.0:
                component.train_one(record)
            else:
                for _ in range(self._rngs[j].poisson(lam)):
                    component.train_one(record)
        self._window.append((record, component_scores))
        self._seen += 1
        if (
            self.config.aggregation == "wmv"
            and self._seen % self.config.refresh_period == 0
        ):
            self._refresh_weights()

    def _refresh_weights(self) -> None:
        if not self._window:
            return
        scores = np.stack([matrix for _, matrix in self._window])
        labels = [record.label_index for record, _ in self._window]
        system = NormalSystem.from_scores(
            scores, _one_hot_rows(labels, self.n_classes)
        )
        self._solution = solve(system, self.config.weight_mode)


def q_statistic(pred_r, pred_s) -> float:
    """Yule Q over two equal-length correctness sequences.

    Counts the four agreement cells exactly (integer arithmetic) and
    returns (n11*n00 - n01*n10) / (n11*n00 + n01*n10); a zero denominator
    (no contingency evidence) maps to 0, the diverse-neutral value.
    """
    a = np.asarray(pred_r, dtype=bool)
    b = np.asarray(pred_s, dtype=bool)
    if a.ndim != 1 or a.shape != b.shape:
        raise DimensionError(f"correctness shapes differ: {a.shape} vs {b.shape}")
    n11 = int(np.count_nonzero(a & b))
    n00 = int(np.count_nonzero(~a & ~b))
    n10 = int(np.count_nonzero(a & ~b))
    n01 = int(np.count_nonzero(~a & b))
    numerator = n11 * n00 - n01 * n10
    denominator = n11 * n00 + n01 * n10
    if denominator == 0:
        return 0.0
    return numerator / denominator


def pairwise_q_matrix(correctness) -> np.ndarray:
    """Symmetric Q matrix over a pool's correctness rows; diagonal 1 by
    definition (a component always agrees with itself)."""
    mat = np.asarray(correctness, dtype=bool)
    if mat.ndim != 2:
        raise DimensionError("correctness must be (pool, window) shaped")
    pool = mat.shape[0]
    q = np.eye(pool)
    for r in range(pool):
        for s in range(r + 1, pool):
            q[r, s] = q[s, r] = q_statistic(mat[r], mat[s])
    return q


def select_most_diverse_pair(correctness) -> tuple[int, int]:
    """Pair of pool indices with minimum Q; ties to the smallest (r, s)."""
    mat = np.asarray(correctness, dtype=bool)
    if mat.ndim != 2:
        raise DimensionError("correctness must be (pool, window) shaped")
    pool = mat.shape[0]
    if pool < 2:
        raise ConfigurationError("need a pool of at least 2 to pick a pair")
    if mat.shape[1] == 0:
        raise ConfigurationError("cannot select a pair from an empty window")
    best_pair = (0, 1)
    best_q = None
    for r in range(pool):
        for s in range(r + 1, pool):
            q = q_statistic(mat[r], mat[s])
            if best_q is None or q < best_q:
                best_q = q
                best_pair = (r, s)
    return best_pair


class Sel2DivEnsemble:
    """Bagged pool that narrows to its most diverse pair.

    Warm-up: all pool components train (Poisson bagging) and predictions
    aggregate the whole pool unweighted. Once the instance window first
    fills, the pairwise Q matrix over the window's correctness indicators
    is computed, the minimum-Q pair is fixed for good, and prediction
    switches to least-squares weighted voting over that pair (weights
    refreshed from the window). The rest of the pool keeps training but
    no longer votes.
    """

    def __init__(
        self,
        n_features: int,
        n_classes: int,
        seed: int = 0,
        *,
        pool_size: int = 10,
        bagging_lambda: float = 6.0,
        window_length: int = 100,
        weight_mode: str = "simplex",
        refresh_period: int = 1,
        learner_kind: str = "ht",
        learner_options: dict | None = None,
    ):
        if pool_size < 2:
            raise ConfigurationError("pool_size must be at least 2")
        if window_length < 1:
            raise ConfigurationError("window_length must be at least 1")
        if bagging_lambda < 0.0:
            raise ConfigurationError("bagging_lambda must be non-negative")
        self.n_features = n_features
        self.n_classes = n_classes
        self.pool_size = pool_size
        self.bagging_lambda = bagging_lambda
        self.weight_mode = weight_mode
        self.refresh_period = refresh_period
        options = learner_options or {}
        self._components = tuple(
            make_learner(learner_kind, n_features, n_classes, **options)
            for _ in range(pool_size)
        )
        self._rngs = tuple(
            Rng(derive_seed(seed, "bagging", j)) for j in range(pool_size)
        )
        self._window = deque(maxlen=window_length)
        self._pair: tuple[int, int] | None = None
        self._q_matrix: np.ndarray | None = None
        self._solution: WeightSolution | None = None
        self._seen = 0

    @property
    def components(self) -> tuple:
        return self._components

    @property
    def selected_pair(self) -> tuple[int, int] | None:
        return self._pair

    @property
    def q_matrix(self) -> np.ndarray | None:
        return None if self._q_matrix is None else self._q_matrix.copy()

    @property
    def weight_solution(self) -> WeightSolution | None:
        return self._solution

    def predict(self, features) -> EnsemblePrediction:
        rows = _score_all(self._components, features)
        full_matrix = np.stack([row.scores for row in rows])
        if self._pair is None:
            polytope = ScorePolytope(tuple(rows))
            aggregated = centroid(polytope)
        else:
            r, s = self._pair
            polytope = ScorePolytope((rows[r], rows[s]))
            weights = (
                self._solution.weights
                if self._solution is not None
                else WeightVector.uniform(2, self.weight_mode)
            )
            aggregated = weighted_centroid(polytope, weights)
        return EnsemblePrediction(
            label=predict_label(aggregated),
            aggregated=aggregated,
            polytope=polytope,
            component_scores=full_matrix,
        )

    def train_one(self, record: StreamRecord, component_scores=None) -> None:
        if component_scores is None:
            component_scores = np.stack(
                [row.scores for row in _score_all(self._components, record.features)]
            )
        else:
            component_scores = np.asarray(component_scores, dtype=np.float64)
            if component_scores.shape != (self.pool_size, self.n_classes):
                raise DimensionError(
                    f"component_scores shape {component_scores.shape}, "
                    f"expected {(self.pool_size, self.n_classes)}"
                )
        for j, component in enumerate(self._components):
            if self.bagging_lambda == 0.0:
                component.train_one(record)
            else:
                for _ in range(self._rngs[j].poisson(self.bagging_lambda)):
                    component.train_one(record)
        self._window.append((record, component_scores))
        self._seen += 1
        if self._pair is None:
            if len(self._window) == self._window.maxlen:
                self._select_pair()
                self._solve_pair_weights()
        elif self._seen % self.refresh_period == 0:
            self._solve_pair_weights()

    def _window_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        scores = np.stack([matrix for _, matrix in self._window])
        labels = np.array([record.label_index for record, _ in self._window])
        return scores, labels

    def _select_pair(self) -> None:
        scores, labels = self._window_arrays()
        predicted = scores.argmax(axis=2)            # (window, pool)
        correctness = (predicted == labels[:, None]).T
        self._q_matrix = pairwise_q_matrix(correctness)
        self._pair = select_most_diverse_pair(correctness)

    def _solve_pair_weights(self) -> None:
        scores, labels = self._window_arrays()
        pair_scores = scores[:, list(self._pair), :]
        system = NormalSystem.from_scores(
            pair_scores, _one_hot_rows(labels, self.n_classes)
        )
        self._solution = solve(system, self.weight_mode)


SCENARIOS = ("levbag_m", "sel2div", "hyb_htnb")


def build_scenario(
    name: str,
    *,
    n_features: int,
    n_classes: int,
    seed: int = 0,
    m: int | None = None,
    window_length: int = 100,
    weight_mode: str = "simplex",
    refresh_period: int = 1,
    learner_options: dict | None = None,
):
    """Configured ensemble for one of the named comparison scenarios.

    levbag_m: m tree components, Poisson(6) bagging, unweighted voting.
    sel2div: 10-component bagged pool narrowed to its most diverse pair,
    weighted voting over a 100-instance window. hyb_htnb: one tree plus
    one naive Bayes, no resampling, weighted voting over the same window.
    """
    if name == "levbag_m":
        if m is None or m < 2:
            raise ConfigurationError("levbag_m needs m >= 2")
        config = EnsembleConfig(
            size=m,
            learners="ht",
            aggregation="mv",
            bagging_lambda=6.0,
            window_length=window_length,
        )
        return VotingEnsemble(
            config, n_features, n_classes, seed, learner_options=learner_options
        )
    if name == "sel2div":
        if m is not None and m != 10:
            raise ConfigurationError("sel2div uses a fixed pool of 10")
        return Sel2DivEnsemble(
            n_features,
            n_classes,
            seed,
            pool_size=10,
            bagging_lambda=6.0,
            window_length=window_length,
            weight_mode=weight_mode,
            refresh_period=refresh_period,
            learner_options=(learner_options or {}).get("ht", {}),
        )
    if name == "hyb_htnb":
        if m is not None and m != 2:
            raise ConfigurationError("hyb_htnb is a fixed pair")
        config = EnsembleConfig(
            size=2,
            learners=("ht", "nb"),
            aggregation="wmv",
            bagging_lambda=0.0,
            window_length=window_length,
            weight_mode=weight_mode,
            refresh_period=refresh_period,
        )
        return VotingEnsemble(
            config, n_features, n_classes, seed, learner_options=learner_options
        )
    raise ConfigurationError(f"unknown scenario {name!r}")
