"""Command-line front-end.

One JSON config document per run; flags override the matching top-level
keys. Subcommands: generate (materialize a stream to CSV), sweep
(ensemble-size sweep plus report files), diversity (the named comparison
scenarios), friedman (standalone rank test on a result matrix), verify
(randomized self-check suites).

Exit codes: 0 success, 1 configuration/validation error, 2 runtime
error (including failed verify checks).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from .ensemble import SCENARIOS, build_scenario, q_statistic
from .errors import ConfigurationError, GeovoteError
from .evaluation import (
    ResultMatrix,
    RunRecord,
    emit_report,
    friedman_test,
    prequential_run,
    size_sweep,
)
from .streams import CsvSchema, StreamSpec, make_stream, write_stream_csv
from .verify import REFERENCE_ACCURACY, run_stats_suite, run_theorem_suite

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2

_GLOBAL_FLAGS = ("seed", "out", "limit", "jobs")

_STREAM_KEYS = {
    "kind", "seed", "n_features", "n_classes", "n_centroids", "drift_speed",
    "drift_points", "noise_percent", "path", "schema", "name",
}
_SCHEMA_KEYS = {"header", "label_column", "feature_columns", "label_map", "n_classes"}
_ENSEMBLE_KEYS = {
    "base_learner", "bagging_lambda", "window_length", "weight_mode",
    "refresh_period", "learner_options",
}
_SCENARIO_KEYS = {"name", "m", "window_length", "weight_mode", "refresh_period"}


def _load_config(args, allowed: set, required=()) -> dict:
    config = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise ConfigurationError(f"config file not found: {path}")
        try:
            config = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config parse error in {path}: {exc}") from exc
        if not isinstance(config, dict):
            raise ConfigurationError("config root must be a JSON object")
    for key in config:
        if key not in allowed:
            raise ConfigurationError(f"unknown config key '{key}'")
    for flag in _GLOBAL_FLAGS:
        value = getattr(args, flag, None)
        if value is not None:
            config[flag] = value
    for key in required:
        if key not in config:
            raise ConfigurationError(f"missing required key '{key}'")
    return config


def _resolve_out(config) -> Path:
    out = config.get("out") or os.environ.get("GEOVOTE_OUT") or "out"
    return Path(out)


def _check_subkeys(mapping, allowed: set, context: str) -> None:
    if not isinstance(mapping, dict):
        raise ConfigurationError(f"'{context}' must be a JSON object")
    for key in mapping:
        if key not in allowed:
            raise ConfigurationError(f"unknown {context} key '{key}'")


def _stream_spec(config, master_seed: int) -> StreamSpec:
    stream = config.get("stream")
    if stream is None:
        raise ConfigurationError("missing required key 'stream'")
    _check_subkeys(stream, _STREAM_KEYS, "stream")
    stream = dict(stream)
    if "kind" not in stream:
        raise ConfigurationError("missing required key 'stream.kind'")
    schema = stream.pop("schema", None)
    if schema is not None:
        _check_subkeys(schema, _SCHEMA_KEYS, "schema")
        schema = dict(schema)
        if schema.get("feature_columns") is not None:
            schema["feature_columns"] = tuple(schema["feature_columns"])
        stream["schema"] = CsvSchema(**schema)
    stream.setdefault("seed", master_seed)
    if "drift_points" in stream:
        stream["drift_points"] = tuple(stream["drift_points"])
    spec = StreamSpec(**stream)
    if spec.kind == "csv" and not Path(spec.path).is_file():
        raise ConfigurationError(f"stream file not found: {spec.path}")
    return spec


def cmd_generate(args) -> int:
    config = _load_config(
        args, allowed={"seed", "out", "limit", "jobs", "stream", "count", "name"},
        required=("seed", "stream"),
    )
    spec = _stream_spec(config, config["seed"])
    count = config.get("count", 1000)
    if args.limit is not None:
        count = args.limit
    if not isinstance(count, int) or count < 0:
        raise ConfigurationError("count must be a non-negative integer")
    out = _resolve_out(config)
    out.mkdir(parents=True, exist_ok=True)
    name = config.get("name") or f"{spec.label}_{spec.fingerprint()}"
    path = out / f"{name}.csv"
    write_stream_csv(spec, count, path)
    print(f"wrote {path} ({count} records)")
    print(f"fingerprint {spec.fingerprint()}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    config = _load_config(
        args,
        allowed={
            "seed", "out", "limit", "jobs", "stream", "sizes", "aggregations",
            "ensemble", "checkpoint_interval", "figures",
        },
        required=("seed", "stream", "sizes"),
    )
    spec = _stream_spec(config, config["seed"])
    ensemble_options = config.get("ensemble", {})
    _check_subkeys(ensemble_options, _ENSEMBLE_KEYS, "ensemble")
    sweep = size_sweep(
        spec,
        config["sizes"],
        aggregations=tuple(config.get("aggregations", ("mv", "wmv"))),
        seed=config["seed"],
        limit=config.get("limit", 10_000),
        checkpoint_interval=config.get("checkpoint_interval", 1000),
        jobs=config.get("jobs", 1),
        **ensemble_options,
    )
    out = _resolve_out(config)
    written = emit_report(
        sweep.run_records(), out, sweeps=[sweep],
        figures=config.get("figures", True),
    )
    for m, mv, wmv, flagged in sweep.table():
        marker = "  <- m = p" if flagged else ""
        mv_text = "-" if mv is None else f"{mv:.4f}"
        wmv_text = "-" if wmv is None else f"{wmv:.4f}"
        print(f"m={m:>4}  mv={mv_text}  wmv={wmv_text}{marker}")
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def _window_pair_q(ensemble, pair) -> float:
    """Q over the current window's correctness indicators for two slots."""
    window = list(ensemble.window if hasattr(ensemble, "window") else [])
    if not window:
        return 0.0
    scores = np.stack([matrix for _, matrix in window])
    labels = np.array([record.label_index for record, _ in window])
    predicted = scores.argmax(axis=2)
    correctness = (predicted == labels[:, None]).T
    return q_statistic(correctness[pair[0]], correctness[pair[1]])


def cmd_diversity(args) -> int:
    config = _load_config(
        args,
        allowed={
            "seed", "out", "limit", "jobs", "stream", "scenario",
            "checkpoint_interval", "figures",
        },
        required=("seed", "stream", "scenario"),
    )
    spec = _stream_spec(config, config["seed"])
    scenario = config["scenario"]
    if isinstance(scenario, str):
        scenario = {"name": scenario}
    _check_subkeys(scenario, _SCENARIO_KEYS, "scenario")
    name = scenario.get("name")
    if name not in SCENARIOS:
        raise ConfigurationError(
            f"scenario name must be one of {SCENARIOS}, got {name!r}"
        )
    ensemble = build_scenario(
        name,
        n_features=spec.n_features,
        n_classes=spec.n_classes,
        seed=config["seed"],
        m=scenario.get("m"),
        window_length=scenario.get("window_length", 100),
        weight_mode=scenario.get("weight_mode", "simplex"),
        refresh_period=scenario.get("refresh_period", 1),
    )
    result = prequential_run(
        make_stream(spec),
        ensemble,
        limit=config.get("limit", 10_000),
        checkpoint_interval=config.get("checkpoint_interval", 1000),
        config_echo={"dataset": spec.label, "scenario": name, "seed": config["seed"]},
    )

    if name == "levbag_m":
        m, aggregation, pair = scenario.get("m"), "mv", None
    elif name == "sel2div":
        m, aggregation, pair = 2, "wmv", ensemble.selected_pair
    else:
        m, aggregation, pair = 2, "wmv", (0, 1)
    record = RunRecord(
        dataset=spec.label, method=name, m=m, aggregation=aggregation, result=result
    )
    out = _resolve_out(config)
    written = emit_report([record], out, figures=config.get("figures", True))

    pair_q = None
    if name == "sel2div":
        if pair is not None and ensemble.q_matrix is not None:
            pair_q = float(ensemble.q_matrix[pair[0], pair[1]])
        q_path = out / "q_matrix.csv"
        matrix = ensemble.q_matrix
        if matrix is not None:
            header = ["component"] + [f"c{i}" for i in range(matrix.shape[0])]
            rows = [
                [f"c{i}"] + [f"{value:.6f}" for value in matrix[i]]
                for i in range(matrix.shape[0])
            ]
            with open(q_path, "w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh)
                writer.writerow(header)
                writer.writerows(rows)
            written.append(q_path)
    elif name == "hyb_htnb":
        pair_q = _window_pair_q(ensemble, pair)

    diversity_path = out / "diversity.csv"
    with open(diversity_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["scenario", "dataset", "m", "final_accuracy", "pair_r", "pair_s", "pair_q"]
        )
        writer.writerow([
            name, spec.label, record.m, f"{result.final_accuracy:.6f}",
            "" if pair is None else pair[0],
            "" if pair is None else pair[1],
            "" if pair_q is None else f"{pair_q:.6f}",
        ])
    written.append(diversity_path)

    print(f"{name} on {spec.label}: final accuracy {result.final_accuracy:.4f}")
    if pair is not None:
        q_text = "n/a" if pair_q is None else f"{pair_q:.4f}"
        print(f"pair ({pair[0]}, {pair[1]})  Q={q_text}")
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def cmd_friedman(args) -> int:
    config = _load_config(
        args, allowed={"seed", "out", "limit", "jobs", "matrix", "alpha",
                       "min_rank_difference"},
    )
    matrix_path = args.matrix or config.get("matrix")
    if matrix_path is not None:
        if not Path(matrix_path).is_file():
            raise ConfigurationError(f"matrix file not found: {matrix_path}")
        matrix = ResultMatrix.load_csv(matrix_path)
    else:
        matrix = REFERENCE_ACCURACY
    alpha = args.alpha if args.alpha is not None else config.get("alpha", 0.05)
    override = (
        args.min_rank_diff
        if args.min_rank_diff is not None
        else config.get("min_rank_difference")
    )
    outcome = friedman_test(matrix, alpha=alpha, min_rank_difference=override)

    order = sorted(
        range(len(matrix.methods)), key=lambda i: -outcome.mean_ranks[i]
    )
    print(f"datasets={len(matrix.datasets)} methods={len(matrix.methods)}")
    for i in order:
        print(f"  {matrix.methods[i]:<16} mean rank {outcome.mean_ranks[i]:.3f}")
    print(f"chi-square {outcome.chi_square:.4f}")
    print(
        f"Iman-Davenport F {outcome.iman_davenport_f:.4f} "
        f"df=({outcome.df[0]}, {outcome.df[1]}) p={outcome.p_value:.6f}"
    )
    decision = "rejected" if outcome.p_value < alpha else "not rejected"
    print(f"null hypothesis {decision} at alpha={alpha}")
    print(f"min rank difference {outcome.min_rank_difference:.3f}")
    if outcome.significant_pairs:
        for i, j in outcome.significant_pairs:
            print(f"  different: {matrix.methods[i]} vs {matrix.methods[j]}")
    else:
        print("  no significantly different pairs")

    if config.get("out") or os.environ.get("GEOVOTE_OUT"):
        out = _resolve_out(config)
        out.mkdir(parents=True, exist_ok=True)
        ranks_path = out / "friedman.csv"
        with open(ranks_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["method", "mean_rank"])
            for method, rank in zip(matrix.methods, outcome.mean_ranks):
                writer.writerow([method, f"{rank:.6f}"])
        print(f"wrote {ranks_path}")
    return EXIT_OK


def cmd_verify(args) -> int:
    cases = args.limit if args.limit is not None else 10_000
    if args.suite == "theorems":
        seed = args.seed if args.seed is not None else 20250817
        checks = run_theorem_suite(n_cases=cases, seed=seed)
    else:
        checks = run_stats_suite()
    for check in checks:
        print(check.describe())
    failed = sum(1 for check in checks if not check.passed)
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_RUNTIME


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--out", help="output directory (default: $GEOVOTE_OUT or ./out)")
    common.add_argument("--seed", type=int, help="master seed (overrides config)")
    common.add_argument("--limit", type=int, help="instance/record limit (overrides config)")
    common.add_argument("--jobs", type=int, help="parallel worker count (overrides config)")

    parser = argparse.ArgumentParser(
        prog="geovote",
        description="Geometric vote aggregation for online ensembles.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="materialize a stream to CSV")
    p.set_defaults(func=cmd_generate)
    p = sub.add_parser("sweep", parents=[common], help="ensemble-size sweep with report")
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("diversity", parents=[common], help="run a comparison scenario")
    p.set_defaults(func=cmd_diversity)
    p = sub.add_parser("friedman", parents=[common], help="rank test over a result matrix")
    p.add_argument("--matrix", help="result matrix CSV (default: embedded reference)")
    p.add_argument("--alpha", type=float, help="significance level (default 0.05)")
    p.add_argument(
        "--min-rank-diff", type=float, dest="min_rank_diff",
        help="override the pairwise mean-rank difference threshold",
    )
    p.set_defaults(func=cmd_friedman)
    p = sub.add_parser("verify", parents=[common], help="run self-check suites")
    p.add_argument("suite", choices=("theorems", "stats"))
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GeovoteError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
