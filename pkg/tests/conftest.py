"""Shared test helpers: random acyclic instances and independent oracles.

The oracles here re-derive expected values from first principles (nested
loop joins, per-row folds over join provenance, direct sketches of the
materialized residual vector) so tests never trust the code paths they
check.
"""

from __future__ import annotations

import numpy as np

from relboost import (
    Dataset,
    RegressionTree,
    SplitCriterion,
    TreeNode,
    make_table,
)
from relboost.oracle import predict_matrix_ensemble
from relboost.sketch import DomainIndex, SketchHashes


def random_instance(
    rng,
    n_tables: int | None = None,
    max_rows: int = 30,
    max_join: int = 10_000,
    min_join: int = 2,
    max_private: int = 2,
    max_features: int | None = None,
    duplicate_prob: float = 0.25,
):
    """A random acyclic multi-table instance with a non-trivial join.

    Tables form a random tree; each edge shares one fresh integer key
    feature, private features are continuous, and labels are dyadic
    rationals so first-tree sufficient statistics are float-exact.  Retries
    until the join lands in [min_join, max_join].  ``max_features`` caps the
    total distinct feature count (keys + privates + label).
    """
    for _ in range(60):
        tau = n_tables if n_tables is not None else int(rng.integers(2, 5))
        parents = [None] + [int(rng.integers(0, i)) for i in range(1, tau)]
        cols: list[list[str]] = [[] for _ in range(tau)]
        key_card: dict[str, int] = {}
        for i in range(1, tau):
            key = f"k{i}"
            cols[i].append(key)
            cols[parents[i]].append(key)
            key_card[key] = int(rng.integers(2, 6))
        if max_features is None:
            for i in range(tau):
                for j in range(int(rng.integers(1, max_private + 1))):
                    cols[i].append(f"p{i}_{j}")
        else:
            budget = max(0, max_features - (tau - 1) - 1)
            counts = [0] * tau
            while budget > 0 and min(counts) < max_private:
                i = int(rng.integers(0, tau))
                if counts[i] < max_private:
                    cols[i].append(f"p{i}_{counts[i]}")
                    counts[i] += 1
                    budget -= 1
        label_table = int(rng.integers(0, tau))
        cols[label_table].append("y")
        tables = []
        for i in range(tau):
            n_rows = int(rng.integers(3, max_rows + 1))
            rows = []
            for _ in range(n_rows):
                row = []
                for c in cols[i]:
                    if c.startswith("k"):
                        row.append(float(rng.integers(0, key_card[c])))
                    elif c == "y":
                        row.append(float(rng.integers(0, 4096)) / 16.0)
                    else:
                        row.append(float(rng.uniform(0, 10)))
                rows.append(row)
            if rows and rng.random() < duplicate_prob:
                rows.append(list(rows[int(rng.integers(0, len(rows)))]))
            tables.append(make_table(f"t{i}", cols[i], rows))
        ds = Dataset(tables, "y", join_cap=10 * max_join)
        try:
            dm = ds.materialize()
        except Exception:
            continue
        if min_join <= dm.n <= max_join:
            return ds
        max_rows = max(4, int(max_rows * 0.7))
    raise RuntimeError("could not generate an instance within the join bounds")


def nested_loop_join(tables):
    """Brute-force natural join by full enumeration; returns (columns, rows)."""
    cols: list[str] = []
    for t in tables:
        for c in t.columns:
            if c not in cols:
                cols.append(c)
    rows = []

    def extend(i, partial):
        if i == len(tables):
            rows.append(tuple(partial[c] for c in cols))
            return
        t = tables[i]
        for row in t.rows:
            cand = dict(partial)
            ok = True
            for c, v in zip(t.columns, row):
                if c in cand and cand[c] != v:
                    ok = False
                    break
                cand[c] = v
            if ok:
                extend(i + 1, cand)

    extend(0, {})
    return cols, rows


def region_mask(dm, gates):
    mask = np.ones(dm.n, dtype=bool)
    for f, iv in gates.items():
        col = dm.column(f)
        mask &= (col >= iv.lo) & (col < iv.hi)
    return mask


def grouped_fold(dm, group_idx: int, n_rows: int, row_fn, gates=None):
    """Per-group-row fold over the materialized join via provenance."""
    mask = region_mask(dm, gates or {})
    out = np.zeros(n_rows)
    for i in range(dm.n):
        if mask[i]:
            out[dm.origins[i, group_idx]] += row_fn(dm.values[i])
    return out


def direct_residual_sketch(ds, dm, trees, gates, hashes: SketchHashes, group: int):
    """Sketch the constrained residual vector straight off the join.

    Applies the definition directly: per join row, the bucket is the sum of
    per-table bucket hashes mod k, the sign the product of per-table signs,
    and the coefficient accumulates sign times residual, grouped by the
    row's origin in the grouping table.
    """
    dix = DomainIndex.from_dataset(ds)
    k = hashes.k
    out = np.zeros((ds.tables[group].n, k))
    labels = dm.column(ds.label)
    resid = labels - predict_matrix_ensemble(trees, dm)
    mask = region_mask(dm, gates or {})
    col_pos = {c: i for i, c in enumerate(dm.columns)}
    for ridx in range(dm.n):
        if not mask[ridx]:
            continue
        row = dm.values[ridx]
        bucket, sign = 0, 1.0
        for t in range(ds.n_tables):
            proj = tuple(row[col_pos[c]] for c in dix.assigned[t])
            w = dix.lookup[t][proj]
            hb, hs = hashes.families[t]
            bucket += hb(w)
            sign *= hs(w)
        out[dm.origins[ridx, group], bucket % k] += sign * resid[ridx]
    return out


def random_tree(rng, features, max_depth: int = 3) -> RegressionTree:
    """A random regression tree over the given feature names."""
    nodes: list[TreeNode | None] = []

    def build(depth):
        nid = len(nodes)
        nodes.append(None)
        if depth >= max_depth or rng.random() < 0.3:
            nodes[nid] = TreeNode(value=float(np.round(rng.normal(), 6)))
            return nid
        f = features[int(rng.integers(0, len(features)))]
        threshold = float(np.round(rng.uniform(-5, 5), 3))
        left = build(depth + 1)
        right = build(depth + 1)
        nodes[nid] = TreeNode(
            split=SplitCriterion(f, threshold), left=left, right=right
        )
        return nid

    build(0)
    return RegressionTree(tuple(nodes))


def two_table_example():
    """The running two-table example: a 2-row join with labels {5, 5}."""
    t1 = make_table("T1", ["a", "b"], [(1, 1), (2, 1)])
    t2 = make_table("T2", ["b", "c"], [(1, 5)])
    return Dataset([t1, t2], "c")


def three_row_example():
    """Single table, feature f = [1, 2, 3], labels [1, 2, 10]."""
    t = make_table("R", ["f", "y"], [(1, 1), (2, 2), (3, 10)])
    return Dataset([t], "y")
