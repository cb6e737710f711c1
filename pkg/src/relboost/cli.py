"""Command-line interface: schema checking, training, prediction, oracle
comparison, and sketch benchmarking.

Machine-readable output (JSON or CSV) goes to stdout; human summaries go to
stderr.  Exit codes: 0 ok, 2 cyclic schema, 3 config/schema/IO problem,
4 resource cap exceeded, 5 internal consistency failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    CyclicSchemaError,
    ModelFormatError,
    ParseError,
    QueryError,
    RelboostError,
    ResourceCapError,
    SchemaError,
)
from .model import deserialize, ensembles_equal, max_leaf_deviation, serialize
from .oracle import node_candidates_oracle, ssr_oracle, train_boosted_oracle
from .relational import Dataset, JoinSpec, Table, load_table_path, make_table
from .sketch import SketchHashes, sketch_norm_sq
from .trainer import (
    PHASE_LEAF,
    PHASE_PAIR,
    PHASE_SKETCH,
    PHASE_STATS,
    QueryCounter,
    TrainConfig,
    sketch_residual_vectors,
    train_boosted,
)

SEED_ENV_VAR = "RELBOOST_SEED"

EXIT_OK = 0
EXIT_CYCLIC = 2
EXIT_CONFIG = 3
EXIT_CAP = 4
EXIT_INTERNAL = 5


def _human(msg: str) -> None:
    print(msg, file=sys.stderr)


def _emit_json(doc) -> None:
    print(json.dumps(doc, sort_keys=True, separators=(",", ":")))


def _sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        h.update(fh.read())
    return h.hexdigest()


def _resolve_seed(args, config: TrainConfig) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {env!r}")
    return config.seed


def _load_config(args) -> TrainConfig:
    with open(args.config, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"train config is not valid JSON: {exc}")
    config = TrainConfig.from_document(doc)
    overrides = {}
    overrides["seed"] = _resolve_seed(args, config)
    if getattr(args, "mode", None):
        overrides["mode"] = args.mode
    if getattr(args, "count_queries", False):
        overrides["count_queries"] = True
    if getattr(args, "trees", None) is not None:
        overrides["trees"] = args.trees
    return TrainConfig.from_document({**config.to_document(), **overrides})


def _load_dataset(join_path):
    spec = JoinSpec.load(join_path)
    ds = Dataset.from_spec(spec)
    hashes = {name: _sha256_file(path) for name, path in spec.tables}
    return spec, ds, {"joinspec": _sha256_file(join_path), "tables": hashes}


# ---------------------------------------------------------------------------
# check-join
# ---------------------------------------------------------------------------


def cmd_check_join(args) -> int:
    _, ds, _ = _load_dataset(args.join)
    result = ds.acyclicity
    trace = [
        {"rule": step.kind, "name": step.name, "table": step.table, "witness": step.witness}
        for step in result.trace
    ]
    ownership = {f: ds.tables[t].name for f, t in ds.owner.items()}
    if not result.acyclic:
        residual = {name: sorted(cols) for name, cols in result.residual}
        _emit_json(
            {
                "verdict": "cyclic",
                "trace": trace,
                "residual": residual,
                "ownership": ownership,
            }
        )
        _human(f"cyclic schema; irreducible tables: {residual}")
        return EXIT_CYCLIC
    root = args.root or ds.tables[0].name
    tree = ds.join_tree(root)
    edges = [
        [ds.tables[i].name, ds.tables[p].name]
        for i, p in enumerate(tree.parent)
        if p >= 0
    ]
    _emit_json(
        {
            "verdict": "acyclic",
            "trace": trace,
            "join_tree": {"root": root, "edges": edges},
            "ownership": ownership,
        }
    )
    _human(f"acyclic schema; join tree rooted at {root!r} with edges {edges}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def _closed_form_counts(log, n_tables: int) -> dict:
    """Expected per-phase grouped-query tallies for a growth log.

    A first-tree node costs 3 stats queries per table.  An exact boosted
    node costs, per table, 3 stats, two per prior leaf, and one per ordered
    leaf pair of distinct prior trees.  A sketched node costs, per table, 2
    stats, one per prior leaf, and (prior leaves + 1) sketch queries.
    """
    expect = {PHASE_STATS: 0, PHASE_LEAF: 0, PHASE_PAIR: 0, PHASE_SKETCH: 0}
    for rec in log:
        leaves = rec.prior_leaves
        if not leaves:
            expect[PHASE_STATS] += 3 * n_tables
            continue
        total_leaves = sum(leaves)
        pairs = sum(a * b for i, a in enumerate(leaves) for j, b in enumerate(leaves) if i != j)
        if rec.sketched:
            expect[PHASE_STATS] += 2 * n_tables
            expect[PHASE_LEAF] += total_leaves * n_tables
            expect[PHASE_SKETCH] += (total_leaves + 1) * n_tables
        else:
            expect[PHASE_STATS] += 3 * n_tables
            expect[PHASE_LEAF] += 2 * total_leaves * n_tables
            expect[PHASE_PAIR] += pairs * n_tables
    return expect


def _annotate_log(log, mode: str):
    for rec in log:
        rec.sketched = mode == "sketch" and bool(rec.prior_leaves)
    return log


def cmd_train(args) -> int:
    t0 = time.perf_counter()
    _, ds, input_hashes = _load_dataset(args.join)
    config = _load_config(args)
    counter = QueryCounter() if config.count_queries else None
    load_done = time.perf_counter()
    log: list = []
    ensemble = train_boosted(ds, config, config.trees, counter=counter, log=log)
    train_done = time.perf_counter()
    document = serialize(ensemble)
    out_path = Path(args.out)
    out_path.write_text(document, encoding="utf-8")
    manifest = {
        "config": {**config.to_document(), "k": config.resolve_k(ds.n_tables)},
        "inputs": input_hashes,
        "label": ds.label,
        "model_path": str(out_path),
        "model_sha256": hashlib.sha256(document.encode()).hexdigest(),
        "query_counts": counter.per_phase() if counter else None,
        "timings": {
            "load_s": load_done - t0,
            "train_s": train_done - load_done,
            "total_s": time.perf_counter() - t0,
        },
    }
    manifest_path = out_path.with_suffix(out_path.suffix + ".manifest.json")
    manifest_path.write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    _emit_json(manifest)
    _human(
        f"trained {len(ensemble.trees)} tree(s) in {config.mode} mode -> {out_path}"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# predict
# ---------------------------------------------------------------------------


def cmd_predict(args) -> int:
    with open(args.model, "r", encoding="utf-8") as fh:
        ensemble = deserialize(fh.read())
    needed = sorted(
        {n.split.feature for t in ensemble.trees for n in t.nodes if not n.is_leaf}
    )
    raw = Path(args.data).read_text(encoding="utf-8")
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(["prediction"])
    if raw.strip():
        table = load_table_path(args.data)
        missing = [f for f in needed if f not in table.columns]
        if missing:
            raise SchemaError(f"input is missing feature columns: {missing}")
        for row in table.rows:
            mapping = dict(zip(table.columns, row))
            writer.writerow([f"{ensemble.predict(mapping):.17g}"])
    text = out.getvalue()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    _human(f"predicted {text.count(chr(10)) - 1} row(s)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# compare
# ---------------------------------------------------------------------------


def cmd_compare(args) -> int:
    _, ds, _ = _load_dataset(args.join)
    config = _load_config(args)
    counter = QueryCounter()
    config = TrainConfig.from_document({**config.to_document(), "count_queries": True})
    log: list = []
    relational = train_boosted(ds, config, config.trees, counter=counter, log=log)
    _annotate_log(log, config.mode)
    expected = _closed_form_counts(log, ds.n_tables)
    measured = counter.per_phase()
    tallies_ok = expected == measured
    report: dict = {
        "mode": config.mode,
        "query_counts": {"measured": measured, "expected": expected},
    }
    if config.mode == "exact":
        oracle_model, _ = train_boosted_oracle(ds, config, config.trees)
        identical, why = ensembles_equal(relational, oracle_model)
        report.update(
            {
                "identical": identical,
                "detail": why,
                "max_leaf_deviation": max_leaf_deviation(relational, oracle_model),
            }
        )
        _emit_json(report)
        if not tallies_ok:
            _human("query tallies diverge from the closed-form counts")
            return EXIT_INTERNAL
        _human("IDENTICAL" if identical else f"MISMATCH: {why}")
        return EXIT_OK if identical else EXIT_INTERNAL
    # sketch mode: grade each searched node's pick by its exact objective
    dm = ds.materialize()
    exact_config = TrainConfig.from_document(
        {**config.to_document(), "mode": "exact"}
    )
    ratios = []
    for rec in log:
        if not (rec.searched and rec.accepted and rec.prior_leaves):
            continue
        prior = relational.trees[: rec.tree_index]
        best, objectives = node_candidates_oracle(ds, dm, prior, rec.gates, exact_config)
        if best is None or best.objective <= 1e-12:
            continue
        key = (rec.choice.table_index, rec.choice.feature_pos, rec.choice.threshold)
        chosen = objectives.get(key)
        if chosen is not None:
            ratios.append(chosen / best.objective)
    report.update(
        {
            "sketched_nodes": len(ratios),
            "true_sse_ratio_max": max(ratios) if ratios else None,
            "true_sse_ratios": ratios,
        }
    )
    _emit_json(report)
    if not tallies_ok:
        _human("query tallies diverge from the closed-form counts")
        return EXIT_INTERNAL
    _human(f"sketch mode: {len(ratios)} graded node(s)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# sketch-bench
# ---------------------------------------------------------------------------


def _bench_dataset(n_tables: int, seed: int) -> Dataset:
    """A small chain-schema instance for benchmarking sketch accuracy."""
    rng = np.random.default_rng(seed)
    tables: list[Table] = []
    rows_per_table = 24
    for t in range(n_tables):
        cols = []
        if t > 0:
            cols.append(f"k{t - 1}")
        if t < n_tables - 1:
            cols.append(f"k{t}")
        cols.append(f"p{t}")
        if t == n_tables - 1:
            cols.append("y")
        rows = []
        for _ in range(rows_per_table):
            row = []
            if t > 0:
                row.append(float(rng.integers(0, 3)))
            if t < n_tables - 1:
                row.append(float(rng.integers(0, 3)))
            row.append(float(np.round(rng.uniform(0, 10), 6)))
            if t == n_tables - 1:
                row.append(float(rng.integers(0, 64)) / 4.0)
            rows.append(row)
        tables.append(make_table(f"t{t}", cols, rows))
    return Dataset(tables, "y")


def cmd_sketch_bench(args) -> int:
    writer = csv.writer(sys.stdout)
    writer.writerow(
        [
            "tau",
            "k",
            "epsilon",
            "delta",
            "trials",
            "failure_rate",
            "mean_rel_error",
            "mean_estimate_ratio",
        ]
    )
    if args.trials == 0:
        _human("no trials requested")
        return EXIT_OK
    ds = _bench_dataset(args.tables, args.seed)
    config = TrainConfig(max_leaves=2, trees=1, seed=args.seed)
    ensemble = train_boosted(ds, config, 1)
    dm = ds.materialize()
    truth = ssr_oracle(dm, ensemble.trees)
    if truth <= 0:
        raise ConfigError("benchmark instance has zero residual norm")
    k = args.k or TrainConfig(
        epsilon=args.epsilon, delta=args.delta
    ).resolve_k(args.tables)
    estimates = []
    for trial in range(args.trials):
        hashes = SketchHashes.from_seed([args.seed, trial], ds.n_tables, k)
        sk = sketch_residual_vectors(ds, {}, ensemble.trees, 0, hashes)
        estimates.append(sketch_norm_sq(sk.sum(axis=0)))
    estimates = np.array(estimates)
    rel_err = np.abs(estimates - truth) / truth
    failure_rate = float((rel_err > args.epsilon).mean())
    writer.writerow(
        [
            args.tables,
            k,
            args.epsilon,
            args.delta,
            args.trials,
            f"{failure_rate:.6f}",
            f"{float(rel_err.mean()):.6f}",
            f"{float(estimates.mean() / truth):.6f}",
        ]
    )
    _human(
        f"tau={args.tables} k={k}: failure rate {failure_rate:.3f}, "
        f"mean relative error {float(rel_err.mean()):.3f}"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing and dispatch
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relboost",
        description="Boosted regression trees over multi-table relational data",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check-join", help="validate a join spec and print its join tree")
    p.add_argument("--join", required=True)
    p.add_argument("--root", default=None)
    p.set_defaults(func=cmd_check_join)

    p = sub.add_parser("train", help="train a model from a join spec")
    p.add_argument("--join", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--mode", choices=["exact", "sketch"], default=None)
    p.add_argument("--trees", type=int, default=None)
    p.add_argument("--count-queries", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict labels for full feature rows")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("compare", help="train both paths and diff the models")
    p.add_argument("--join", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--mode", choices=["exact", "sketch"], default=None)
    p.add_argument("--trees", type=int, default=None)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sketch-bench", help="measure sketch estimate accuracy")
    p.add_argument("--tables", type=int, default=2)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--epsilon", type=float, default=0.5)
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_sketch_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CyclicSchemaError as exc:
        _human(f"error: {exc}")
        return EXIT_CYCLIC
    except ResourceCapError as exc:
        _human(f"error: {exc}")
        return EXIT_CAP
    except (ConfigError, SchemaError, ParseError, ModelFormatError, QueryError) as exc:
        _human(f"error: {exc}")
        return EXIT_CONFIG
    except OSError as exc:
        _human(f"io error: {exc}")
        return EXIT_CONFIG
    except RelboostError as exc:
        _human(f"internal error: {exc}")
        return EXIT_INTERNAL


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
