"""Voting ensembles: bagging, aggregation, diversity, scenarios."""

import numpy as np
import pytest

from geovote.ensemble import (
    EnsembleConfig,
    Sel2DivEnsemble,
    VotingEnsemble,
    build_scenario,
    pairwise_q_matrix,
    q_statistic,
    select_most_diverse_pair,
)
from geovote.errors import ComponentError, ConfigurationError, DimensionError
from geovote.geometry import ScoreVector
from geovote.learners import GaussianNaiveBayes, HoeffdingTree
from geovote.streams import StreamRecord, StreamSpec, make_stream, take


def rec(features, label, seq=0):
    return StreamRecord(np.asarray(features, dtype=np.float64), label, seq)


class FixedLearner:
    """Always emits the same score vector; for aggregation arithmetic."""

    def __init__(self, scores):
        self._scores = np.asarray(scores, dtype=np.float64)
        self.trained = 0

    def score(self, features):
        return ScoreVector(self._scores.copy())

    def train_one(self, record):
        self.trained += 1

    def reset(self):
        self.trained = 0


class CountingLearner:
    """Scores depend on how often it trained; replication counter."""

    def __init__(self):
        self.trained = 0
        self.calls = []

    def score(self, features):
        c = float(self.trained)
        return ScoreVector(np.array([1.0 / (1.0 + c), c / (1.0 + c)]))

    def train_one(self, record):
        self.trained += 1
        self.calls.append(record.seq)

    def reset(self):
        self.trained = 0
        self.calls = []


class FailingLearner:
    def score(self, features):
        raise ValueError("broken component")

    def train_one(self, record):
        pass

    def reset(self):
        pass


class TestEnsembleConfig:
    def test_single_kind_expands_to_every_slot(self):
        config = EnsembleConfig(size=3, learners="nb")
        assert config.learners == ("nb", "nb", "nb")

    def test_explicit_kinds_must_match_size(self):
        config = EnsembleConfig(size=2, learners=("ht", "nb"))
        assert config.learners == ("ht", "nb")
        with pytest.raises(ConfigurationError):
            EnsembleConfig(size=3, learners=("ht", "nb"))

    def test_size_lower_bound(self):
        with pytest.raises(ConfigurationError):
            EnsembleConfig(size=1)

    def test_validation(self):
        with pytest.raises(ConfigurationError):
            EnsembleConfig(size=2, aggregation="median")
        with pytest.raises(ConfigurationError):
            EnsembleConfig(size=2, bagging_lambda=-1.0)
        with pytest.raises(ConfigurationError):
            EnsembleConfig(size=2, window_length=0)
        with pytest.raises(ConfigurationError):
            EnsembleConfig(size=2, weight_mode="convex")
        with pytest.raises(ConfigurationError):
            EnsembleConfig(size=2, refresh_period=0)


class TestPredict:
    def build(self, stubs, aggregation="mv", **kwargs):
        config = EnsembleConfig(size=len(stubs), learners="nb",
                                aggregation=aggregation, **kwargs)
        ensemble = VotingEnsemble(config, n_features=2, n_classes=2, seed=1)
        ensemble._components = tuple(stubs)
        return ensemble

    def test_opposed_one_hots_tie_break_to_zero(self):
        ensemble = self.build([FixedLearner([1, 0]), FixedLearner([0, 1])])
        prediction = ensemble.predict([0.0, 0.0])
        np.testing.assert_allclose(prediction.aggregated, [0.5, 0.5], atol=1e-15)
        assert prediction.label == 0

    def test_identical_components_idempotent(self):
        stubs = [FixedLearner([0.3, 0.7]) for _ in range(5)]
        ensemble = self.build(stubs)
        np.testing.assert_allclose(
            ensemble.predict([0.0, 0.0]).aggregated, [0.3, 0.7], atol=1e-15
        )

    def test_polytope_carries_all_rows(self):
        ensemble = self.build([FixedLearner([1, 0]), FixedLearner([0.2, 0.8])])
        prediction = ensemble.predict([0.0, 0.0])
        np.testing.assert_allclose(
            prediction.component_scores, [[1.0, 0.0], [0.2, 0.8]], atol=1e-15
        )
        assert prediction.polytope.n_components == 2

    def test_component_failure_names_the_slot(self):
        ensemble = self.build([FixedLearner([1, 0]), FailingLearner()])
        with pytest.raises(ComponentError) as err:
            ensemble.predict([0.0, 0.0])
        assert err.value.index == 1

    def test_wmv_uniform_until_first_solve(self):
        ensemble = self.build(
            [FixedLearner([1, 0]), FixedLearner([0, 1])], aggregation="wmv"
        )
        assert ensemble.weight_solution is None
        np.testing.assert_allclose(
            ensemble.predict([0.0, 0.0]).aggregated, [0.5, 0.5], atol=1e-15
        )


class TestMvEqualsUniformWmv:
    def test_end_to_end_equivalence(self):
        spec = StreamSpec(kind="rbf", seed=71, n_features=4, n_classes=3)
        config_mv = EnsembleConfig(size=3, learners="nb", aggregation="mv",
                                   bagging_lambda=1.0)
        # Huge refresh period: the wmv twin never solves, so its weights
        # stay uniform the whole run.
        config_wmv = EnsembleConfig(size=3, learners="nb", aggregation="wmv",
                                    bagging_lambda=1.0, refresh_period=10_000)
        mv = VotingEnsemble(config_mv, 4, 3, seed=5)
        wmv = VotingEnsemble(config_wmv, 4, 3, seed=5)
        for record in take(make_stream(spec), 300):
            a = mv.predict(record.features)
            b = wmv.predict(record.features)
            np.testing.assert_allclose(a.aggregated, b.aggregated, atol=1e-12)
            assert a.label == b.label
            mv.train_one(record, a.component_scores)
            wmv.train_one(record, b.component_scores)


class TestTraining:
    def test_lambda_zero_trains_exactly_once(self):
        config = EnsembleConfig(size=3, learners="nb", bagging_lambda=0.0)
        ensemble = VotingEnsemble(config, 2, 2, seed=9)
        stubs = [CountingLearner() for _ in range(3)]
        ensemble._components = tuple(stubs)
        for i in range(50):
            ensemble.train_one(rec([0.0, 0.0], 0, seq=i))
        for stub in stubs:
            assert stub.trained == 50
            assert stub.calls == list(range(50))

    def test_poisson_replication_mean(self):
        config = EnsembleConfig(size=4, learners="nb", bagging_lambda=6.0)
        ensemble = VotingEnsemble(config, 2, 2, seed=11)
        stubs = [CountingLearner() for _ in range(4)]
        ensemble._components = tuple(stubs)
        n = 20_000
        for i in range(n):
            ensemble.train_one(rec([0.0, 0.0], 0, seq=i))
        for stub in stubs:
            assert stub.trained / n == pytest.approx(6.0, abs=0.1)

    def test_component_substreams_differ(self):
        config = EnsembleConfig(size=2, learners="nb", bagging_lambda=1.0)
        ensemble = VotingEnsemble(config, 2, 2, seed=13)
        stubs = [CountingLearner(), CountingLearner()]
        ensemble._components = tuple(stubs)
        for i in range(200):
            ensemble.train_one(rec([0.0, 0.0], 0, seq=i))
        assert stubs[0].calls != stubs[1].calls

    def test_same_seed_same_replication(self):
        outcomes = []
        for _ in range(2):
            config = EnsembleConfig(size=2, learners="nb", bagging_lambda=2.0)
            ensemble = VotingEnsemble(config, 2, 2, seed=17)
            stubs = [CountingLearner(), CountingLearner()]
            ensemble._components = tuple(stubs)
            for i in range(100):
                ensemble.train_one(rec([0.0, 0.0], 0, seq=i))
            outcomes.append([stub.calls for stub in stubs])
        assert outcomes[0] == outcomes[1]

    def test_window_bounded_and_not_retroactive(self):
        config = EnsembleConfig(size=2, learners="nb", aggregation="wmv",
                                window_length=10, refresh_period=5)
        ensemble = VotingEnsemble(config, 2, 2, seed=19)
        ensemble._components = (CountingLearner(), CountingLearner())
        kept = []
        for i in range(25):
            record = rec([0.0, 0.0], i % 2, seq=i)
            prediction = ensemble.predict(record.features)
            kept.append(prediction.component_scores.copy())
            ensemble.train_one(record, prediction.component_scores)
        assert len(ensemble.window) == 10
        for offset, (stored_record, stored_scores) in enumerate(ensemble.window):
            assert stored_record.seq == 15 + offset
            # Training moved the stubs on, but the window still holds the
            # exact prediction-time scores.
            np.testing.assert_array_equal(stored_scores, kept[15 + offset])

    def test_wmv_refresh_period(self):
        spec = StreamSpec(kind="rbf", seed=23, n_features=3, n_classes=2)
        config = EnsembleConfig(size=2, learners="nb", aggregation="wmv",
                                refresh_period=10)
        ensemble = VotingEnsemble(config, 3, 2, seed=21)
        stream = make_stream(spec)
        for i in range(9):
            ensemble.train_one(next(stream))
        assert ensemble.weight_solution is None
        ensemble.train_one(next(stream))
        assert ensemble.weight_solution is not None
        assert ensemble.weight_solution.instances_seen == 10

    def test_component_scores_shape_checked(self):
        config = EnsembleConfig(size=2, learners="nb")
        ensemble = VotingEnsemble(config, 2, 2, seed=1)
        with pytest.raises(DimensionError):
            ensemble.train_one(rec([0.0, 0.0], 0), np.zeros((3, 2)))


class TestQStatistic:
    def test_perfect_agreement(self):
        seq = [True, True, False, True, False]
        assert q_statistic(seq, seq) == 1.0

    def test_perfect_disagreement(self):
        a = [True, False, True, False]
        b = [False, True, False, True]
        assert q_statistic(a, b) == -1.0

    def test_hand_counted_contingency(self):
        a = [True] * 40 + [True] * 10 + [False] * 20 + [False] * 30
        b = [True] * 40 + [False] * 10 + [True] * 20 + [False] * 30
        assert q_statistic(a, b) == pytest.approx(1000 / 1400, abs=1e-15)

    def test_zero_denominator_maps_to_zero(self):
        # All-true pair: n00 = n01 = n10 = 0.
        assert q_statistic([True, True], [True, True]) == 0.0

    def test_symmetry_exact(self):
        rng = np.random.default_rng(401)
        for _ in range(200):
            a = rng.integers(2, size=30).astype(bool)
            b = rng.integers(2, size=30).astype(bool)
            assert q_statistic(a, b) == q_statistic(b, a)

    def test_brute_force_oracle(self):
        rng = np.random.default_rng(409)
        for _ in range(300):
            n = int(rng.integers(1, 60))
            a = rng.integers(2, size=n).astype(bool)
            b = rng.integers(2, size=n).astype(bool)
            n11 = n00 = n10 = n01 = 0
            for x, y in zip(a, b):
                if x and y:
                    n11 += 1
                elif x and not y:
                    n10 += 1
                elif not x and y:
                    n01 += 1
                else:
                    n00 += 1
            denom = n11 * n00 + n01 * n10
            expected = 0.0 if denom == 0 else (n11 * n00 - n01 * n10) / denom
            assert q_statistic(a, b) == expected

    def test_range(self):
        rng = np.random.default_rng(419)
        for _ in range(200):
            a = rng.integers(2, size=25).astype(bool)
            b = rng.integers(2, size=25).astype(bool)
            assert -1.0 <= q_statistic(a, b) <= 1.0

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            q_statistic([True, False], [True])


class TestPairwiseAndSelection:
    def test_matrix_shape_symmetry_diagonal(self):
        rng = np.random.default_rng(421)
        correctness = rng.integers(2, size=(10, 40)).astype(bool)
        q = pairwise_q_matrix(correctness)
        assert q.shape == (10, 10)
        np.testing.assert_array_equal(q, q.T)
        np.testing.assert_array_equal(np.diag(q), np.ones(10))

    def test_pool_of_two(self):
        correctness = np.array([[True, False], [False, True]])
        assert select_most_diverse_pair(correctness) == (0, 1)

    def test_complementary_member_wins(self):
        base = np.array([True, False, True, True, False])
        correctness = np.stack([base, base, ~base])
        assert select_most_diverse_pair(correctness) in ((0, 2), (1, 2))
        # Lexicographic tie-break: (0, 2) beats (1, 2), both at Q = -1.
        assert select_most_diverse_pair(correctness) == (0, 2)

    def test_brute_force_pool_oracle(self):
        rng = np.random.default_rng(431)
        for _ in range(100):
            correctness = rng.integers(2, size=(10, 30)).astype(bool)
            q = pairwise_q_matrix(correctness)
            best = min(
                ((q[r, s], r, s) for r in range(10) for s in range(r + 1, 10)),
                key=lambda t: (t[0], t[1], t[2]),
            )
            assert select_most_diverse_pair(correctness) == (best[1], best[2])

    def test_degenerate_pools_rejected(self):
        with pytest.raises(ConfigurationError):
            select_most_diverse_pair(np.ones((1, 5), dtype=bool))
        with pytest.raises(ConfigurationError):
            select_most_diverse_pair(np.ones((3, 0), dtype=bool))


class TestSel2Div:
    def run_warmup(self, window_length=30, pool_size=4, n=120):
        spec = StreamSpec(kind="sea", seed=303)
        ensemble = Sel2DivEnsemble(
            3, 2, seed=7, pool_size=pool_size, window_length=window_length,
            bagging_lambda=6.0, learner_kind="nb",
        )
        history = []
        for record in take(make_stream(spec), n):
            prediction = ensemble.predict(record.features)
            history.append((record, prediction.component_scores.copy()))
            ensemble.train_one(record, prediction.component_scores)
        return ensemble, history

    def test_selection_after_first_full_window(self):
        ensemble, history = self.run_warmup()
        assert ensemble.selected_pair is not None
        r, s = ensemble.selected_pair
        assert 0 <= r < s < 4
        assert ensemble.q_matrix.shape == (4, 4)

    def test_selection_matches_window_oracle(self):
        ensemble, history = self.run_warmup(window_length=30)
        window = history[:30]
        scores = np.stack([m for _, m in window])
        labels = np.array([record.label_index for record, _ in window])
        correctness = (scores.argmax(axis=2) == labels[:, None]).T
        assert ensemble.selected_pair == select_most_diverse_pair(correctness)
        np.testing.assert_allclose(
            ensemble.q_matrix, pairwise_q_matrix(correctness), atol=1e-15
        )

    def test_pair_stays_fixed(self):
        ensemble, _ = self.run_warmup(n=60)
        pair = ensemble.selected_pair
        matrix = ensemble.q_matrix.copy()
        spec = StreamSpec(kind="sea", seed=404)
        for record in take(make_stream(spec), 100):
            prediction = ensemble.predict(record.features)
            ensemble.train_one(record, prediction.component_scores)
        assert ensemble.selected_pair == pair
        np.testing.assert_array_equal(ensemble.q_matrix, matrix)

    def test_post_selection_prediction_uses_the_pair(self):
        ensemble, _ = self.run_warmup()
        prediction = ensemble.predict(np.array([5.0, 5.0, 5.0]))
        assert prediction.polytope.n_components == 2
        # All pool members still report their scores for the window.
        assert prediction.component_scores.shape == (4, 2)
        assert ensemble.weight_solution is not None

    def test_warmup_prediction_uses_whole_pool(self):
        spec = StreamSpec(kind="sea", seed=505)
        ensemble = Sel2DivEnsemble(3, 2, seed=1, pool_size=5, window_length=50,
                                   learner_kind="nb")
        record = next(make_stream(spec))
        prediction = ensemble.predict(record.features)
        assert prediction.polytope.n_components == 5
        assert ensemble.selected_pair is None

    def test_validation(self):
        with pytest.raises(ConfigurationError):
            Sel2DivEnsemble(3, 2, pool_size=1)
        with pytest.raises(ConfigurationError):
            Sel2DivEnsemble(3, 2, window_length=0)
        with pytest.raises(ConfigurationError):
            Sel2DivEnsemble(3, 2, bagging_lambda=-0.5)


class TestBuildScenario:
    def test_levbag_defaults(self):
        ensemble = build_scenario("levbag_m", n_features=3, n_classes=2, m=2)
        assert isinstance(ensemble, VotingEnsemble)
        assert ensemble.config.size == 2
        assert ensemble.config.bagging_lambda == 6.0
        assert ensemble.config.aggregation == "mv"
        assert all(isinstance(c, HoeffdingTree) for c in ensemble.components)

    def test_levbag_large(self):
        ensemble = build_scenario("levbag_m", n_features=3, n_classes=2, m=128)
        assert len(ensemble.components) == 128

    def test_levbag_needs_m(self):
        with pytest.raises(ConfigurationError):
            build_scenario("levbag_m", n_features=3, n_classes=2)
        with pytest.raises(ConfigurationError):
            build_scenario("levbag_m", n_features=3, n_classes=2, m=1)

    def test_hybrid_pair(self):
        ensemble = build_scenario("hyb_htnb", n_features=3, n_classes=2)
        assert isinstance(ensemble.components[0], HoeffdingTree)
        assert isinstance(ensemble.components[1], GaussianNaiveBayes)
        assert ensemble.config.bagging_lambda == 0.0
        assert ensemble.config.aggregation == "wmv"
        with pytest.raises(ConfigurationError):
            build_scenario("hyb_htnb", n_features=3, n_classes=2, m=3)

    def test_sel2div_pool_of_ten(self):
        ensemble = build_scenario("sel2div", n_features=3, n_classes=2)
        assert isinstance(ensemble, Sel2DivEnsemble)
        assert ensemble.pool_size == 10
        assert ensemble.bagging_lambda == 6.0
        with pytest.raises(ConfigurationError):
            build_scenario("sel2div", n_features=3, n_classes=2, m=5)

    def test_unknown_scenario(self):
        with pytest.raises(ConfigurationError):
            build_scenario("boosting", n_features=3, n_classes=2)
