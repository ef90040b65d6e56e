"""Prequential evaluation, ensemble-size sweeps, and rank statistics.

The evaluation protocol is interleaved test-then-train: every record is
first predicted, correctness is scored against the true label, and only
then does the record train the ensemble, so accuracy is measured on
never-before-seen instances throughout.

Sweeps rerun the same stream spec (hence the identical instance
sequence) once per ensemble size; votes never feed back into training,
so a single pass scores every requested aggregation. Size tasks are
independent, so they may run in worker processes, and results merge by
deterministic key so parallel and serial output match byte for byte.

Method comparison uses the Friedman rank test with the Iman-Davenport
F correction; ranks ascend with accuracy (1 = worst), ties averaged, so
a higher mean rank means a better method.
"""

from __future__ import annotations

import csv
import math
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import islice
from pathlib import Path

import numpy as np

from .ensemble import EnsembleConfig, VotingEnsemble
from .errors import (
    ConfigurationError,
    DimensionError,
    EmptyStreamError,
    ReportIOError,
)
from .geometry import centroid, predict_label
from .special import f_sf, normal_quantile
from .streams import StreamSpec, derive_seed, make_stream

DEFAULT_CHECKPOINT_INTERVAL = 1000


@dataclass(frozen=True)
class PrequentialResult:
    """Outcome of one prequential run.

    checkpoints holds (instances_seen, cumulative_accuracy) pairs at each
    interval boundary plus the final instant; wall_time_s is informational
    and never written into deterministic report files.
    """

    checkpoints: tuple
    final_accuracy: float
    instances: int
    correct: int
    wall_time_s: float
    config: dict = field(default_factory=dict)


def prequential_run(
    stream,
    ensemble,
    limit: int | None = None,
    checkpoint_interval: int = DEFAULT_CHECKPOINT_INTERVAL,
    config_echo: dict | None = None,
) -> PrequentialResult:
    """Interleaved test-then-train over up to `limit` records."""
    if checkpoint_interval < 1:
        raise ConfigurationError("checkpoint_interval must be positive")
    if limit is not None and limit < 0:
        raise ConfigurationError("limit must be non-negative")
    started = time.perf_counter()
    iterator = stream if limit is None else islice(stream, limit)
    seen = 0
    correct = 0
    checkpoints = []
    for record in iterator:
        prediction = ensemble.predict(record.features)
        if prediction.label == record.label_index:
            correct += 1
        ensemble.train_one(record, prediction.component_scores)
        seen += 1
        if seen % checkpoint_interval == 0:
            checkpoints.append((seen, correct / seen))
    if seen == 0:
        raise EmptyStreamError("stream produced no instances")
    if not checkpoints or checkpoints[-1][0] != seen:
        checkpoints.append((seen, correct / seen))
    return PrequentialResult(
        checkpoints=tuple(checkpoints),
        final_accuracy=correct / seen,
        instances=seen,
        correct=correct,
        wall_time_s=time.perf_counter() - started,
        config=dict(config_echo or {}),
    )


@dataclass(frozen=True)
class RunRecord:
    """One evaluated run, as it appears in the summary report."""

    dataset: str
    method: str
    m: int
    aggregation: str
    result: PrequentialResult


@dataclass(frozen=True)
class SweepResult:
    """All (size, aggregation) cells of one stream's size sweep."""

    spec: StreamSpec
    sizes: tuple
    aggregations: tuple
    results: dict

    @property
    def dataset(self) -> str:
        return self.spec.label

    def table(self) -> list[tuple]:
        """(m, mv_accuracy, wmv_accuracy, m_equals_p) per size; a missing
        aggregation leaves None."""
        rows = []
        for size in self.sizes:
            mv = self.results.get((size, "mv"))
            wmv = self.results.get((size, "wmv"))
            rows.append((
                size,
                None if mv is None else mv.final_accuracy,
                None if wmv is None else wmv.final_accuracy,
                size == self.spec.n_classes,
            ))
        return rows

    def run_records(self) -> list[RunRecord]:
        records = []
        for size in self.sizes:
            for aggregation in self.aggregations:
                result = self.results.get((size, aggregation))
                if result is not None:
                    records.append(RunRecord(
                        dataset=self.dataset,
                        method=aggregation,
                        m=size,
                        aggregation=aggregation,
                        result=result,
                    ))
        return records


def _run_sweep_size(task: tuple):
    """Evaluate every requested aggregation for one ensemble size.

    A single prequential pass suffices: component training is independent
    of how votes are combined, so the mv and wmv series come from the
    same trained components and only the label extraction differs. The
    ensemble is configured for wmv whenever wmv is requested so that the
    weight window is maintained; the mv label is then read off the plain
    centroid of the same score polytope.
    """
    (spec, size, aggregations, seed, limit, checkpoint_interval, options) = task
    primary = "wmv" if "wmv" in aggregations else aggregations[0]
    config = EnsembleConfig(
        size=size,
        learners=options["base_learner"],
        aggregation=primary,
        bagging_lambda=options["bagging_lambda"],
        window_length=options["window_length"],
        weight_mode=options["weight_mode"],
        refresh_period=options["refresh_period"],
    )
    ensemble = VotingEnsemble(
        config,
        spec.n_features,
        spec.n_classes,
        seed=derive_seed(seed, "ensemble", size),
        learner_options=options["learner_options"],
    )
    started = time.perf_counter()
    stream = make_stream(spec)
    iterator = stream if limit is None else islice(stream, limit)
    want_mv = "mv" in aggregations and primary != "mv"
    seen = 0
    correct = dict.fromkeys(aggregations, 0)
    checkpoints = {aggregation: [] for aggregation in aggregations}
    for record in iterator:
        prediction = ensemble.predict(record.features)
        labels = {primary: prediction.label}
        if want_mv:
            labels["mv"] = predict_label(centroid(prediction.polytope))
        for aggregation in aggregations:
            if labels[aggregation] == record.label_index:
                correct[aggregation] += 1
        ensemble.train_one(record, prediction.component_scores)
        seen += 1
        if seen % checkpoint_interval == 0:
            for aggregation in aggregations:
                checkpoints[aggregation].append((seen, correct[aggregation] / seen))
    if seen == 0:
        raise EmptyStreamError("stream produced no instances")
    elapsed = time.perf_counter() - started
    per_size = {}
    for aggregation in aggregations:
        marks = checkpoints[aggregation]
        if not marks or marks[-1][0] != seen:
            marks.append((seen, correct[aggregation] / seen))
        per_size[aggregation] = PrequentialResult(
            checkpoints=tuple(marks),
            final_accuracy=correct[aggregation] / seen,
            instances=seen,
            correct=correct[aggregation],
            wall_time_s=elapsed,
            config={
                "dataset": spec.label,
                "stream_fingerprint": spec.fingerprint(),
                "size": size,
                "aggregation": aggregation,
                "seed": seed,
            },
        )
    return size, per_size


def size_sweep(
    spec: StreamSpec,
    sizes,
    aggregations=("mv", "wmv"),
    *,
    seed: int = 0,
    limit: int | None = 100_000,
    checkpoint_interval: int = DEFAULT_CHECKPOINT_INTERVAL,
    jobs: int = 1,
    base_learner: str = "ht",
    bagging_lambda: float = 1.0,
    window_length: int = 500,
    weight_mode: str = "simplex",
    refresh_period: int = 100,
    learner_options: dict | None = None,
) -> SweepResult:
    """Prequential run per (ensemble size x aggregation) over one stream.

    Component training randomness depends on (seed, size) only, never on
    the aggregation, so the mv and wmv cells of a size see identical
    component histories and differ purely in how votes are combined;
    the implementation exploits this by scoring every aggregation from
    one training pass per size.
    """
    sizes = tuple(sorted({int(s) for s in sizes}))
    if not sizes:
        raise ConfigurationError("sizes must be non-empty")
    aggregations = tuple(dict.fromkeys(aggregations))
    for aggregation in aggregations:
        if aggregation not in ("mv", "wmv"):
            raise ConfigurationError(f"unknown aggregation {aggregation!r}")
    if not aggregations:
        raise ConfigurationError("aggregations must be non-empty")
    if jobs < 1:
        raise ConfigurationError("jobs must be positive")
    options = {
        "base_learner": base_learner,
        "bagging_lambda": bagging_lambda,
        "window_length": window_length,
        "weight_mode": weight_mode,
        "refresh_period": refresh_period,
        "learner_options": learner_options or {},
    }
    tasks = [
        (spec, size, aggregations, seed, limit, checkpoint_interval, options)
        for size in sizes
    ]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_run_sweep_size, tasks))
    else:
        outcomes = [_run_sweep_size(task) for task in tasks]
    results = {
        (size, aggregation): result
        for size, per_size in outcomes
        for aggregation, result in per_size.items()
    }
    return SweepResult(spec=spec, sizes=sizes, aggregations=aggregations, results=results)


@dataclass(frozen=True)
class ResultMatrix:
    """Datasets x methods accuracy table for the rank test."""

    datasets: tuple
    methods: tuple
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        datasets = tuple(self.datasets)
        methods = tuple(self.methods)
        if values.ndim != 2 or values.shape != (len(datasets), len(methods)):
            raise DimensionError(
                f"values shape {values.shape} does not match "
                f"{len(datasets)} datasets x {len(methods)} methods"
            )
        if not np.all(np.isfinite(values)):
            raise DimensionError("result matrix contains non-finite entries")
        object.__setattr__(self, "datasets", datasets)
        object.__setattr__(self, "methods", methods)
        object.__setattr__(self, "values", values)

    @classmethod
    def load_csv(cls, path) -> "ResultMatrix":
        """First column dataset names, header row method names."""
        try:
            with open(path, newline="", encoding="utf-8") as fh:
                rows = list(csv.reader(fh))
        except OSError as exc:
            raise ReportIOError(path, str(exc)) from exc
        if len(rows) < 2 or len(rows[0]) < 2:
            raise ConfigurationError(f"{path}: matrix needs a header and data rows")
        methods = tuple(cell.strip() for cell in rows[0][1:])
        datasets = []
        values = []
        for i, row in enumerate(rows[1:], start=2):
            if len(row) != len(methods) + 1:
                raise ConfigurationError(f"{path}: ragged row at line {i}")
            datasets.append(row[0].strip())
            try:
                values.append([float(cell) for cell in row[1:]])
            except ValueError as exc:
                raise ConfigurationError(f"{path}: bad number at line {i} ({exc})") from exc
        return cls(tuple(datasets), methods, np.array(values))

    def save_csv(self, path) -> None:
        header = ["dataset", *self.methods]
        rows = [
            [name, *[f"{v:.6f}" for v in row]]
            for name, row in zip(self.datasets, self.values)
        ]
        _write_csv(path, header, rows)


def average_ranks(values) -> np.ndarray:
    """Ascending ranks with ties averaged: smallest value gets rank 1."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise DimensionError("ranking expects a non-empty vector")
    order = np.argsort(arr, kind="stable")
    ranks = np.empty(arr.size)
    sorted_vals = arr[order]
    i = 0
    while i < arr.size:
        j = i
        while j + 1 < arr.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


@dataclass(frozen=True)
class FriedmanResult:
    mean_ranks: np.ndarray
    chi_square: float
    iman_davenport_f: float
    df: tuple
    p_value: float
    alpha: float
    min_rank_difference: float
    significant_pairs: tuple


def friedman_test(
    matrix: ResultMatrix,
    alpha: float = 0.05,
    min_rank_difference: float | None = None,
) -> FriedmanResult:
    """Friedman ranks plus the Iman-Davenport F test over a result matrix.

    Pairwise method differences are compared against
    min_rank_difference; when not supplied it defaults to the normal-
    approximation threshold z_{1-alpha/2} * sqrt(k(k+1)/(6N)).
    """
    n_datasets, n_methods = matrix.values.shape
    if n_datasets < 2 or n_methods < 2:
        raise ConfigurationError("rank test needs at least 2 datasets and 2 methods")
    if not (0.0 < alpha < 1.0):
        raise ConfigurationError("alpha must be in (0, 1)")
    ranks = np.vstack([average_ranks(row) for row in matrix.values])
    mean_ranks = ranks.mean(axis=0)
    rank_sums = ranks.sum(axis=0)
    chi_square = (
        12.0 / (n_datasets * n_methods * (n_methods + 1))
        * float((rank_sums ** 2).sum())
        - 3.0 * n_datasets * (n_methods + 1)
    )
    df = (n_methods - 1, (n_methods - 1) * (n_datasets - 1))
    denominator = n_datasets * (n_methods - 1) - chi_square
    if denominator <= 0.0:
        f_stat = math.inf
        p_value = 0.0
    else:
        f_stat = (n_datasets - 1) * chi_square / denominator
        p_value = f_sf(f_stat, df[0], df[1])
    if min_rank_difference is None:
        min_rank_difference = normal_quantile(1.0 - alpha / 2.0) * math.sqrt(
            n_methods * (n_methods + 1) / (6.0 * n_datasets)
        )
    significant = tuple(
        (i, j)
        for i in range(n_methods)
        for j in range(i + 1, n_methods)
        if abs(mean_ranks[i] - mean_ranks[j]) >= min_rank_difference
    )
    return FriedmanResult(
        mean_ranks=mean_ranks,
        chi_square=chi_square,
        iman_davenport_f=f_stat,
        df=df,
        p_value=p_value,
        alpha=alpha,
        min_rank_difference=min_rank_difference,
        significant_pairs=significant,
    )


def _slug(text: str) -> str:
    cleaned = re.sub(r"[^A-Za-z0-9._-]+", "-", text).strip("-")
    return cleaned or "unnamed"


def _write_csv(path, header, rows) -> None:
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as exc:
        raise ReportIOError(path, str(exc)) from exc


def _fmt(value: float) -> str:
    return f"{value:.6f}"


def emit_report(records, out_dir, sweeps=(), figures: bool = True) -> list[Path]:
    """Write the report files for a set of runs (and optional sweeps).

    Produces summary.csv (one row per run), a checkpoint-series CSV per
    run, a plot-data CSV per sweep (m, mv_accuracy, wmv_accuracy,
    m_equals_p), and, unless figures is off, rendered PNG figures. All
    CSV content is deterministic for a given set of results.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ReportIOError(out, str(exc)) from exc
    written = []

    ordered = sorted(records, key=lambda r: (r.dataset, r.method, r.m, r.aggregation))
    summary_path = out / "summary.csv"
    _write_csv(
        summary_path,
        ["dataset", "method", "m", "aggregation", "final_accuracy"],
        [
            [r.dataset, r.method, r.m, r.aggregation, _fmt(r.result.final_accuracy)]
            for r in ordered
        ],
    )
    written.append(summary_path)

    for r in ordered:
        series_path = out / (
            f"series_{_slug(r.dataset)}_{_slug(r.method)}_m{r.m}_{r.aggregation}.csv"
        )
        _write_csv(
            series_path,
            ["instances", "cumulative_accuracy"],
            [[seen, _fmt(acc)] for seen, acc in r.result.checkpoints],
        )
        written.append(series_path)

    for sweep in sweeps:
        sweep_path = out / f"sweep_{_slug(sweep.dataset)}.csv"
        _write_csv(
            sweep_path,
            ["m", "mv_accuracy", "wmv_accuracy", "m_equals_p"],
            [
                [
                    m,
                    "" if mv is None else _fmt(mv),
                    "" if wmv is None else _fmt(wmv),
                    int(flag),
                ]
                for m, mv, wmv, flag in sweep.table()
            ],
        )
        written.append(sweep_path)

    if figures:
        from .plotting import render_series_figure, render_sweep_figure

        try:
            for sweep in sweeps:
                figure_path = out / f"sweep_{_slug(sweep.dataset)}.png"
                render_sweep_figure(sweep, figure_path)
                written.append(figure_path)
            by_dataset = {}
            for r in ordered:
                by_dataset.setdefault(r.dataset, []).append(r)
            for dataset, group in sorted(by_dataset.items()):
                figure_path = out / f"series_{_slug(dataset)}.png"
                render_series_figure(group, figure_path)
                written.append(figure_path)
        except OSError as exc:
            raise ReportIOError(out, f"figure rendering failed: {exc}") from exc
    return written
