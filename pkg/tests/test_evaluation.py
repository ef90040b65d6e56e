"""Prequential loops, size sweeps, rank statistics, report files."""

import math
from types import SimpleNamespace

import numpy as np
import pytest
from scipy import stats

from geovote.ensemble import EnsembleConfig, VotingEnsemble
from geovote.errors import (
    ConfigurationError,
    DimensionError,
    EmptyStreamError,
    ReportIOError,
)
from geovote.evaluation import (
    FriedmanResult,
    PrequentialResult,
    ResultMatrix,
    RunRecord,
    SweepResult,
    average_ranks,
    emit_report,
    friedman_test,
    prequential_run,
    size_sweep,
)
from geovote.special import f_sf, normal_quantile
from geovote.streams import StreamSpec, make_stream, take


class ConstantPredictor:
    """Always votes class 0; lets accuracy be computed by hand."""

    def __init__(self, n_classes=2):
        self.n_classes = n_classes
        self.trained = 0

    def predict(self, features):
        scores = np.zeros(self.n_classes)
        scores[0] = 1.0
        return SimpleNamespace(label=0, aggregated=scores, component_scores=None)

    def train_one(self, record, component_scores=None):
        self.trained += 1


class MirrorPredictor:
    """Peeks at a twin replica of the stream; a perfect oracle."""

    def __init__(self, spec):
        self._twin = make_stream(spec)

    def predict(self, features):
        label = next(self._twin).label_index
        return SimpleNamespace(label=label, component_scores=None)

    def train_one(self, record, component_scores=None):
        pass


def small_spec(seed=101, p=2):
    return StreamSpec(kind="rbf", seed=seed, n_features=3, n_classes=p)


class TestPrequentialRun:
    def test_oracle_predictor_scores_one(self):
        spec = small_spec()
        result = prequential_run(make_stream(spec), MirrorPredictor(spec), limit=500)
        assert result.final_accuracy == 1.0
        assert result.correct == result.instances == 500

    def test_constant_predictor_matches_class_fraction(self):
        spec = small_spec(seed=113)
        records = take(make_stream(spec), 400)
        fraction = sum(r.label_index == 0 for r in records) / 400
        result = prequential_run(make_stream(spec), ConstantPredictor(), limit=400)
        assert result.final_accuracy == fraction

    def test_train_called_once_per_instance(self):
        predictor = ConstantPredictor()
        prequential_run(make_stream(small_spec()), predictor, limit=123)
        assert predictor.trained == 123

    def test_checkpoint_schedule(self):
        result = prequential_run(
            make_stream(small_spec()), ConstantPredictor(), limit=250,
            checkpoint_interval=100,
        )
        assert [seen for seen, _ in result.checkpoints] == [100, 200, 250]
        assert result.checkpoints[-1][1] == result.final_accuracy

    def test_exact_multiple_has_no_duplicate_final(self):
        result = prequential_run(
            make_stream(small_spec()), ConstantPredictor(), limit=200,
            checkpoint_interval=100,
        )
        assert [seen for seen, _ in result.checkpoints] == [100, 200]

    def test_interval_longer_than_stream(self):
        result = prequential_run(
            make_stream(small_spec()), ConstantPredictor(), limit=30,
            checkpoint_interval=1000,
        )
        assert result.checkpoints == ((30, result.final_accuracy),)

    def test_final_accuracy_interval_invariant(self):
        spec = small_spec(seed=131)
        a = prequential_run(make_stream(spec), ConstantPredictor(), limit=300,
                            checkpoint_interval=37)
        b = prequential_run(make_stream(spec), ConstantPredictor(), limit=300,
                            checkpoint_interval=100)
        assert a.final_accuracy == b.final_accuracy

    def test_finite_stream_without_limit(self):
        records = take(make_stream(small_spec()), 50)
        result = prequential_run(iter(records), ConstantPredictor(), limit=None)
        assert result.instances == 50

    def test_empty_stream_raises(self):
        with pytest.raises(EmptyStreamError):
            prequential_run(iter([]), ConstantPredictor())
        with pytest.raises(EmptyStreamError):
            prequential_run(make_stream(small_spec()), ConstantPredictor(), limit=0)

    def test_argument_validation(self):
        with pytest.raises(ConfigurationError):
            prequential_run(make_stream(small_spec()), ConstantPredictor(),
                            checkpoint_interval=0)
        with pytest.raises(ConfigurationError):
            prequential_run(make_stream(small_spec()), ConstantPredictor(),
                            limit=-1)

    def test_config_echo_copied(self):
        echo = {"dataset": "toy"}
        result = prequential_run(make_stream(small_spec()), ConstantPredictor(),
                                 limit=10, config_echo=echo)
        assert result.config == echo
        assert result.config is not echo

    def test_real_ensemble_runs(self):
        spec = small_spec(seed=137)
        config = EnsembleConfig(size=2, learners="nb", aggregation="wmv",
                                bagging_lambda=1.0, refresh_period=50)
        ensemble = VotingEnsemble(config, 3, 2, seed=3)
        result = prequential_run(make_stream(spec), ensemble, limit=400)
        assert 0.0 <= result.final_accuracy <= 1.0
        assert ensemble.weight_solution is not None


def run_small_sweep(aggregations=("mv", "wmv"), jobs=1, sizes=(2, 4), seed=7):
    return size_sweep(
        small_spec(seed=149),
        sizes,
        aggregations,
        seed=seed,
        limit=400,
        checkpoint_interval=100,
        jobs=jobs,
        base_learner="nb",
        bagging_lambda=1.0,
        window_length=100,
        refresh_period=50,
    )


class TestSizeSweep:
    def test_cells_and_table(self):
        sweep = run_small_sweep()
        assert set(sweep.results) == {(2, "mv"), (2, "wmv"), (4, "mv"), (4, "wmv")}
        rows = sweep.table()
        assert [row[0] for row in rows] == [2, 4]
        # p = 2 classes, so only the m = 2 row carries the marker.
        assert [row[3] for row in rows] == [True, False]
        for _, mv, wmv, _ in rows:
            assert 0.0 <= mv <= 1.0
            assert 0.0 <= wmv <= 1.0

    def test_run_records_cover_every_cell(self):
        sweep = run_small_sweep()
        records = sweep.run_records()
        assert len(records) == 4
        assert {(r.m, r.aggregation) for r in records} == set(sweep.results)
        for record in records:
            assert record.method == record.aggregation
            assert record.dataset == sweep.dataset

    def test_rerun_is_deterministic(self):
        a = run_small_sweep()
        b = run_small_sweep()
        for key in a.results:
            assert a.results[key].final_accuracy == b.results[key].final_accuracy
            assert a.results[key].checkpoints == b.results[key].checkpoints

    def test_single_aggregation_matches_joint_run(self):
        # The fused pass must give the same numbers as dedicated runs:
        # training never depends on the aggregation, so mv-only, wmv-only
        # and the joint sweep all agree cell for cell.
        joint = run_small_sweep()
        mv_only = run_small_sweep(aggregations=("mv",))
        wmv_only = run_small_sweep(aggregations=("wmv",))
        for size in (2, 4):
            assert (
                mv_only.results[(size, "mv")].checkpoints
                == joint.results[(size, "mv")].checkpoints
            )
            assert (
                wmv_only.results[(size, "wmv")].checkpoints
                == joint.results[(size, "wmv")].checkpoints
            )
        assert (2, "wmv") not in mv_only.results
        rows = mv_only.table()
        assert rows[0][2] is None

    def test_parallel_matches_serial(self):
        serial = run_small_sweep(jobs=1)
        parallel = run_small_sweep(jobs=2)
        for key in serial.results:
            assert (
                serial.results[key].final_accuracy
                == parallel.results[key].final_accuracy
            )
            assert (
                serial.results[key].checkpoints == parallel.results[key].checkpoints
            )

    def test_sizes_deduplicated_and_sorted(self):
        sweep = run_small_sweep(sizes=(4, 2, 4))
        assert sweep.sizes == (2, 4)

    def test_result_config_echo(self):
        sweep = run_small_sweep()
        cell = sweep.results[(2, "wmv")]
        assert cell.config["size"] == 2
        assert cell.config["aggregation"] == "wmv"
        assert cell.config["stream_fingerprint"] == sweep.spec.fingerprint()

    def test_validation(self):
        with pytest.raises(ConfigurationError):
            run_small_sweep(sizes=())
        with pytest.raises(ConfigurationError):
            run_small_sweep(aggregations=("mean",))
        with pytest.raises(ConfigurationError):
            run_small_sweep(jobs=0)


class TestResultMatrix:
    def matrix(self):
        rng = np.random.default_rng(211)
        values = np.round(rng.uniform(0.3, 0.9, size=(4, 3)), 6)
        return ResultMatrix(("a", "b", "c", "d"), ("m1", "m2", "m3"), values)

    def test_round_trip(self, tmp_path):
        matrix = self.matrix()
        path = tmp_path / "matrix.csv"
        matrix.save_csv(path)
        loaded = ResultMatrix.load_csv(path)
        assert loaded.datasets == matrix.datasets
        assert loaded.methods == matrix.methods
        np.testing.assert_array_equal(loaded.values, matrix.values)

    def test_shape_validation(self):
        with pytest.raises(DimensionError):
            ResultMatrix(("a",), ("m1", "m2"), np.zeros((2, 2)))
        with pytest.raises(DimensionError):
            ResultMatrix(("a", "b"), ("m1",), np.array([[np.nan], [0.5]]))

    def test_load_missing_file(self, tmp_path):
        with pytest.raises(ReportIOError):
            ResultMatrix.load_csv(tmp_path / "absent.csv")

    def test_load_header_only(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("dataset,m1,m2\n")
        with pytest.raises(ConfigurationError):
            ResultMatrix.load_csv(path)

    def test_load_ragged_row_names_line(self, tmp_path):
        path = tmp_path / "ragged.csv"
        path.write_text("dataset,m1,m2\na,0.5,0.6\nb,0.7\n")
        with pytest.raises(ConfigurationError, match="line 3"):
            ResultMatrix.load_csv(path)

    def test_load_bad_number_names_line(self, tmp_path):
        path = tmp_path / "nonnum.csv"
        path.write_text("dataset,m1,m2\na,0.5,oops\n")
        with pytest.raises(ConfigurationError, match="line 2"):
            ResultMatrix.load_csv(path)


class TestAverageRanks:
    def test_strictly_increasing(self):
        np.testing.assert_array_equal(average_ranks([10.0, 20.0, 30.0]), [1, 2, 3])

    def test_reversed(self):
        np.testing.assert_array_equal(average_ranks([3.0, 2.0, 1.0]), [3, 2, 1])

    def test_all_tied(self):
        np.testing.assert_array_equal(average_ranks([5.0, 5.0, 5.0]), [2, 2, 2])

    def test_partial_tie(self):
        np.testing.assert_array_equal(
            average_ranks([0.7, 0.5, 0.7, 0.9]), [2.5, 1.0, 2.5, 4.0]
        )

    def test_against_rankdata(self):
        rng = np.random.default_rng(223)
        for _ in range(300):
            n = int(rng.integers(1, 12))
            # Integer draws force plenty of ties.
            values = rng.integers(0, 5, size=n).astype(np.float64)
            np.testing.assert_allclose(
                average_ranks(values),
                stats.rankdata(values, method="average"),
                atol=1e-12,
            )

    def test_validation(self):
        with pytest.raises(DimensionError):
            average_ranks([])
        with pytest.raises(DimensionError):
            average_ranks(np.zeros((2, 2)))


class TestFriedmanTest:
    def random_matrix(self, seed, n=8, k=5):
        rng = np.random.default_rng(seed)
        values = rng.uniform(size=(n, k))
        datasets = tuple(f"d{i}" for i in range(n))
        methods = tuple(f"m{j}" for j in range(k))
        return ResultMatrix(datasets, methods, values)

    def test_chi_square_matches_scipy(self):
        for seed in (301, 311, 331):
            matrix = self.random_matrix(seed)
            ours = friedman_test(matrix)
            scipy_stat, _ = stats.friedmanchisquare(*matrix.values.T)
            assert ours.chi_square == pytest.approx(scipy_stat, rel=1e-10)

    def test_f_statistic_definition(self):
        matrix = self.random_matrix(307)
        n, k = matrix.values.shape
        result = friedman_test(matrix)
        expected = (n - 1) * result.chi_square / (n * (k - 1) - result.chi_square)
        assert result.iman_davenport_f == pytest.approx(expected, rel=1e-12)
        assert result.df == (k - 1, (k - 1) * (n - 1))

    def test_p_value_matches_scipy_f(self):
        matrix = self.random_matrix(313)
        result = friedman_test(matrix)
        expected = stats.f.sf(result.iman_davenport_f, *result.df)
        assert result.p_value == pytest.approx(expected, rel=1e-9)

    def test_identical_methods_are_null(self):
        values = np.tile(np.linspace(0.4, 0.8, 5)[:, None], (1, 4))
        matrix = ResultMatrix(tuple("abcde"), tuple("wxyz"), values)
        result = friedman_test(matrix)
        np.testing.assert_allclose(result.mean_ranks, np.full(4, 2.5), atol=1e-12)
        assert result.chi_square == pytest.approx(0.0, abs=1e-12)
        assert result.iman_davenport_f == pytest.approx(0.0, abs=1e-12)
        assert result.p_value == pytest.approx(1.0, abs=1e-12)
        assert result.significant_pairs == ()

    def test_total_dominance_saturates(self):
        # Every dataset orders the methods identically; the chi-square
        # statistic hits its maximum N(k-1) and the F correction blows up.
        values = np.tile(np.array([0.1, 0.2, 0.3, 0.4]), (6, 1))
        values = values + np.arange(6)[:, None] * 0.001
        matrix = ResultMatrix(tuple(f"d{i}" for i in range(6)), tuple("wxyz"), values)
        result = friedman_test(matrix)
        np.testing.assert_array_equal(result.mean_ranks, [1.0, 2.0, 3.0, 4.0])
        assert math.isinf(result.iman_davenport_f)
        assert result.p_value == 0.0

    def test_mean_rank_sum_invariant(self):
        for seed in (317, 331, 337):
            matrix = self.random_matrix(seed, n=6, k=9)
            result = friedman_test(matrix)
            assert result.mean_ranks.sum() == pytest.approx(9 * 10 / 2, abs=1e-9)

    def test_default_min_rank_difference_formula(self):
        matrix = self.random_matrix(347, n=6, k=9)
        result = friedman_test(matrix, alpha=0.05)
        expected = normal_quantile(0.975) * math.sqrt(9 * 10 / (6.0 * 6))
        assert result.min_rank_difference == pytest.approx(expected, rel=1e-12)

    def test_explicit_threshold_drives_pairs(self):
        values = np.tile(np.array([0.1, 0.2, 0.3]), (4, 1))
        values = values + np.arange(4)[:, None] * 0.001
        matrix = ResultMatrix(tuple("abcd"), tuple("xyz"), values)
        wide = friedman_test(matrix, min_rank_difference=1.5)
        assert wide.significant_pairs == ((0, 2),)
        narrow = friedman_test(matrix, min_rank_difference=0.5)
        assert narrow.significant_pairs == ((0, 1), (0, 2), (1, 2))

    def test_validation(self):
        matrix = self.random_matrix(349, n=2, k=2)
        with pytest.raises(ConfigurationError):
            friedman_test(
                ResultMatrix(("a",), ("x", "y"), np.array([[0.1, 0.2]]))
            )
        with pytest.raises(ConfigurationError):
            friedman_test(matrix, alpha=0.0)
        with pytest.raises(ConfigurationError):
            friedman_test(matrix, alpha=1.0)


class TestEmitReport:
    def sweep(self):
        return run_small_sweep()

    def test_summary_and_series_files(self, tmp_path):
        sweep = self.sweep()
        records = sweep.run_records()
        written = emit_report(records, tmp_path, sweeps=[sweep], figures=False)
        summary = (tmp_path / "summary.csv").read_text().splitlines()
        assert summary[0] == "dataset,method,m,aggregation,final_accuracy"
        assert len(summary) == 1 + len(records)
        series = sorted(p.name for p in tmp_path.glob("series_*.csv"))
        assert len(series) == len(records)
        one = (tmp_path / series[0]).read_text().splitlines()
        assert one[0] == "instances,cumulative_accuracy"
        assert len(one) == 1 + 4  # checkpoints at 100, 200, 300, 400
        assert set(written) == set(tmp_path.iterdir())

    def test_sweep_file_contents(self, tmp_path):
        sweep = self.sweep()
        emit_report([], tmp_path, sweeps=[sweep], figures=False)
        sweep_files = list(tmp_path.glob("sweep_*.csv"))
        assert len(sweep_files) == 1
        lines = sweep_files[0].read_text().splitlines()
        assert lines[0] == "m,mv_accuracy,wmv_accuracy,m_equals_p"
        assert len(lines) == 3
        first = lines[1].split(",")
        assert first[0] == "2" and first[3] == "1"
        assert lines[2].split(",")[3] == "0"

    def test_reruns_byte_identical(self, tmp_path):
        sweep = self.sweep()
        records = sweep.run_records()
        dir_a = tmp_path / "a"
        dir_b = tmp_path / "b"
        emit_report(records, dir_a, sweeps=[sweep], figures=False)
        emit_report(records, dir_b, sweeps=[sweep], figures=False)
        names = sorted(p.name for p in dir_a.iterdir())
        assert names == sorted(p.name for p in dir_b.iterdir())
        for name in names:
            assert (dir_a / name).read_bytes() == (dir_b / name).read_bytes()

    def test_figures_rendered(self, tmp_path):
        sweep = self.sweep()
        records = sweep.run_records()[:1]
        written = emit_report(records, tmp_path, sweeps=[sweep], figures=True)
        pngs = [path for path in written if path.suffix == ".png"]
        assert len(pngs) == 2
        for path in pngs:
            assert path.exists()
            assert path.stat().st_size > 100

    def test_six_decimal_accuracy_format(self, tmp_path):
        result = PrequentialResult(
            checkpoints=((10, 1 / 3),), final_accuracy=1 / 3,
            instances=10, correct=3, wall_time_s=0.0,
        )
        record = RunRecord(dataset="toy", method="mv", m=2,
                           aggregation="mv", result=result)
        emit_report([record], tmp_path, figures=False)
        lines = (tmp_path / "summary.csv").read_text().splitlines()
        assert lines[1] == "toy,mv,2,mv,0.333333"

    def test_slugged_filenames(self, tmp_path):
        result = PrequentialResult(
            checkpoints=((5, 0.4),), final_accuracy=0.4,
            instances=5, correct=2, wall_time_s=0.0,
        )
        record = RunRecord(dataset="rbf p=2/x", method="mv", m=2,
                           aggregation="mv", result=result)
        emit_report([record], tmp_path, figures=False)
        assert (tmp_path / "series_rbf-p-2-x_mv_m2_mv.csv").exists()

    def test_unwritable_target_raises(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(ReportIOError):
            emit_report([], blocker / "sub", figures=False)
