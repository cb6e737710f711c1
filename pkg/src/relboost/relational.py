"""Tables, join schemas, acyclicity, join trees, and a desk-scale materializer.

All values are 64-bit floats; categorical data must be encoded upstream.
Duplicate rows are kept and contribute multiplicity to the join (bag
semantics).  Everything here is immutable after construction and safe to use
from multiple threads.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from collections import Counter, deque
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import TextIO

import numpy as np

from .errors import (
    CyclicSchemaError,
    ParseError,
    ResourceCapError,
    SchemaError,
)

DEFAULT_JOIN_CAP = 1_000_000


@dataclass(frozen=True)
class Table:
    """A named columnar relation of float rows; duplicates are preserved."""

    name: str
    columns: tuple[str, ...]
    rows: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        if not self.columns:
            raise SchemaError(f"table {self.name!r} has no columns")
        if len(set(self.columns)) != len(self.columns):
            raise SchemaError(f"table {self.name!r} has duplicate column names")
        width = len(self.columns)
        for i, row in enumerate(self.rows):
            if len(row) != width:
                raise SchemaError(
                    f"table {self.name!r} row {i + 1} has {len(row)} fields, "
                    f"expected {width}"
                )

    @property
    def n(self) -> int:
        return len(self.rows)

    def column_index(self, name: str) -> int:
        try:
            return self.columns.index(name)
        except ValueError:
            raise SchemaError(f"table {self.name!r} has no column {name!r}") from None

    @cached_property
    def matrix(self) -> np.ndarray:
        if not self.rows:
            return np.zeros((0, len(self.columns)))
        return np.array(self.rows, dtype=np.float64)

    def column_values(self, pos: int) -> np.ndarray:
        return self.matrix[:, pos]


def make_table(name, columns, rows) -> Table:
    """Convenience constructor that normalizes rows to float tuples."""
    return Table(
        name,
        tuple(columns),
        tuple(tuple(float(v) for v in row) for row in rows),
    )


def load_table(source: str | TextIO, name: str) -> Table:
    """Parse a CSV stream (or CSV text) into a Table.

    The first record must be a header of unique column names; every later
    field must parse as a finite decimal number.  Rows are kept in file
    order, duplicates included.
    """
    stream = io.StringIO(source) if isinstance(source, str) else source
    reader = csv.reader(stream)
    header = None
    rows = []
    for lineno, record in enumerate(reader, start=1):
        if header is None:
            header = [field.strip() for field in record]
            if not header or all(f == "" for f in header):
                raise ParseError("empty header", row=lineno)
            if len(set(header)) != len(header):
                raise SchemaError(
                    f"duplicate column name in header of table {name!r}"
                )
            continue
        if len(record) != len(header):
            raise ParseError(
                f"expected {len(header)} fields, found {len(record)}", row=lineno
            )
        parsed = []
        for col, field in enumerate(record, start=1):
            try:
                value = float(field)
            except ValueError:
                raise ParseError(
                    f"field {field!r} is not a number", row=lineno, column=col
                ) from None
            if not math.isfinite(value):
                raise ParseError(
                    f"field {field!r} is not finite", row=lineno, column=col
                )
            parsed.append(value)
        rows.append(tuple(parsed))
    if header is None:
        raise ParseError("empty input: missing header", row=1)
    return Table(name, tuple(header), tuple(rows))


def load_table_path(path, name: str | None = None) -> Table:
    path = Path(path)
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return load_table(fh, name or path.stem)


# ---------------------------------------------------------------------------
# Join hypergraph and acyclicity
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class JoinHypergraph:
    """One vertex per feature, one hyperedge per table."""

    vertices: tuple[str, ...]
    edges: tuple[frozenset[str], ...]
    table_names: tuple[str, ...]
    tables: tuple[Table, ...]


def build_hypergraph(tables) -> JoinHypergraph:
    tables = tuple(tables)
    if not tables:
        raise SchemaError("cannot build a hypergraph from an empty table list")
    seen: dict[str, None] = {}
    for t in tables:
        for c in t.columns:
            seen.setdefault(c)
    return JoinHypergraph(
        vertices=tuple(seen),
        edges=tuple(frozenset(t.columns) for t in tables),
        table_names=tuple(t.name for t in tables),
        tables=tables,
    )


@dataclass(frozen=True)
class GyoStep:
    """One reduction event: a column drop or a table absorption."""

    kind: str  # "column" or "table"
    name: str
    table: str | None = None  # owning table for column steps
    witness: str | None = None  # absorbing table for table steps


@dataclass(frozen=True)
class AcyclicityResult:
    acyclic: bool
    trace: tuple[GyoStep, ...]
    residual: tuple[tuple[str, frozenset[str]], ...]
    parents: dict


def check_acyclic(h: JoinHypergraph) -> AcyclicityResult:
    """Decide acyclicity by exhaustive reduction.

    Two rules are applied until neither fires: drop a column present in only
    one live table; drop a table whose remaining columns are contained in
    another live table.  A table whose columns have all been dropped is
    absorbed by the lowest-index live table (vacuous containment); the last
    table standing empty is simply removed.  The schema is acyclic iff no
    table survives.  Scanning is in declaration order, so the trace is
    deterministic.
    """
    live: dict[str, list[str]] = {
        name: list(edge_cols)
        for name, edge_cols in zip(
            h.table_names, (tuple(t.columns) for t in h.tables)
        )
    }
    trace: list[GyoStep] = []
    parents: dict[str, str | None] = {}
    progress = True
    while progress and live:
        progress = False
        counts = Counter(c for cols in live.values() for c in cols)
        for name in list(live):
            kept = []
            for c in live[name]:
                if counts[c] == 1:
                    trace.append(GyoStep("column", c, table=name))
                    counts[c] -= 1
                    progress = True
                else:
                    kept.append(c)
            live[name] = kept
        for name in list(live):
            cols = set(live[name])
            witness = None
            for other in live:
                if other != name and cols <= set(live[other]):
                    witness = other
                    break
            if witness is None and not cols:
                witness = next((o for o in live if o != name), None)
            if witness is not None or not cols:
                live.pop(name)
                parents[name] = witness
                trace.append(GyoStep("table", name, witness=witness))
                progress = True
                break
    return AcyclicityResult(
        acyclic=not live,
        trace=tuple(trace),
        residual=tuple((n, frozenset(c)) for n, c in live.items()),
        parents=parents,
    )


def _acyclic_randomized(h: JoinHypergraph, rng) -> bool:
    """Reduction with randomly ordered rule applications (verdict only)."""
    live = {name: set(t.columns) for name, t in zip(h.table_names, h.tables)}
    while live:
        counts = Counter(c for cols in live.values() for c in cols)
        moves = []
        for name, cols in live.items():
            for c in cols:
                if counts[c] == 1:
                    moves.append(("column", name, c))
            for other in live:
                if other != name and cols <= live[other]:
                    moves.append(("table", name, other))
            if not cols:
                moves.append(("table", name, None))
        if not moves:
            return False
        kind, name, arg = moves[rng.integers(0, len(moves))]
        if kind == "column":
            live[name].discard(arg)
        else:
            live.pop(name)
    return True


# ---------------------------------------------------------------------------
# Join trees
# ---------------------------------------------------------------------------


class JoinTree:
    """A rooted tree with one bag per input table.

    Bags are exactly the tables' feature sets; the running-intersection
    property is verified structurally after construction.  Treat instances
    as immutable.
    """

    def __init__(self, tables: tuple[Table, ...], parent: tuple[int, ...], root: int):
        self.tables = tuple(tables)
        self.parent = tuple(parent)
        self.root = root
        n = len(self.tables)
        self.children: list[list[int]] = [[] for _ in range(n)]
        for i, p in enumerate(self.parent):
            if p >= 0:
                self.children[p].append(i)
        # reverse preorder: every node appears after all of its children
        preorder = []
        stack = [root]
        while stack:
            nid = stack.pop()
            preorder.append(nid)
            stack.extend(reversed(self.children[nid]))
        self.postorder = tuple(reversed(preorder))
        # shared features with the parent, in child column order
        self.shared: list[tuple[str, ...]] = [()] * n
        self.child_key_pos: list[tuple[int, ...]] = [()] * n
        self.parent_key_pos: list[tuple[int, ...]] = [()] * n
        for i, p in enumerate(self.parent):
            if p < 0:
                continue
            pcols = set(self.tables[p].columns)
            shared = tuple(c for c in self.tables[i].columns if c in pcols)
            self.shared[i] = shared
            self.child_key_pos[i] = tuple(self.tables[i].columns.index(c) for c in shared)
            self.parent_key_pos[i] = tuple(self.tables[p].columns.index(c) for c in shared)

    def bags(self) -> tuple[frozenset, ...]:
        return tuple(frozenset(t.columns) for t in self.tables)

    def validate(self) -> None:
        """Check the running-intersection property for every feature."""
        if len(self.postorder) != len(self.tables):
            raise SchemaError("join tree is not connected")
        for feature in {c for t in self.tables for c in t.columns}:
            holders = {i for i, t in enumerate(self.tables) if feature in t.columns}
            # connectivity of the induced subgraph over tree edges
            start = next(iter(holders))
            seen = {start}
            queue = deque([start])
            while queue:
                nid = queue.popleft()
                neighbors = list(self.children[nid])
                if self.parent[nid] >= 0:
                    neighbors.append(self.parent[nid])
                for nb in neighbors:
                    if nb in holders and nb not in seen:
                        seen.add(nb)
                        queue.append(nb)
            if seen != holders:
                raise SchemaError(
                    f"running intersection violated for feature {feature!r}"
                )


def build_join_tree(h: JoinHypergraph, root_table: str) -> JoinTree:
    """Build a join tree rooted at ``root_table``.

    Absorption witnesses from the reduction give the undirected edges; the
    requested root then orients them.  Rejects cyclic schemas.
    """
    if root_table not in h.table_names:
        raise SchemaError(f"unknown root table {root_table!r}")
    result = check_acyclic(h)
    if not result.acyclic:
        residual = ", ".join(
            f"{name}({', '.join(sorted(cols))})" for name, cols in result.residual
        )
        raise CyclicSchemaError(
            f"schema is cyclic; irreducible tables: {residual}",
            residual=result.residual,
        )
    index = {name: i for i, name in enumerate(h.table_names)}
    adj: list[list[int]] = [[] for _ in h.table_names]
    for name, witness in result.parents.items():
        if witness is not None:
            a, b = index[name], index[witness]
            adj[a].append(b)
            adj[b].append(a)
    root = index[root_table]
    parent = [-2] * len(h.table_names)
    parent[root] = -1
    queue = deque([root])
    while queue:
        nid = queue.popleft()
        for nb in sorted(adj[nid]):
            if parent[nb] == -2:
                parent[nb] = nid
                queue.append(nb)
    if any(p == -2 for p in parent):
        raise SchemaError("join tree construction left disconnected tables")
    tree = JoinTree(h.tables, tuple(parent), root)
    tree.validate()
    return tree


# ---------------------------------------------------------------------------
# Materialized join (oracle scale only)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DesignMatrix:
    """The natural join of the input tables, one row per training example.

    ``origins[i, t]`` is the row index in table ``t`` that produced join row
    ``i``; rows are sorted lexicographically by value then origin.
    """

    columns: tuple[str, ...]
    values: np.ndarray
    origins: np.ndarray
    label: str | None = None

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def label_index(self) -> int | None:
        if self.label is None:
            return None
        return self.columns.index(self.label)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.columns.index(name)]

    def row_mapping(self, i: int) -> dict:
        return dict(zip(self.columns, self.values[i]))


def materialize_join(tables, cap: int = DEFAULT_JOIN_CAP, label: str | None = None) -> DesignMatrix:
    """Compute the exact natural join with row provenance.

    Tables are folded in declaration order with a hash join on the shared
    columns; the cap applies to every intermediate as well as the result.
    """
    tables = tuple(tables)
    if not tables:
        raise SchemaError("cannot join an empty table list")
    cols = list(tables[0].columns)
    rows = [list(r) for r in tables[0].rows]
    origins = [[i] for i in range(len(rows))]
    if len(rows) > cap:
        raise ResourceCapError(f"join exceeds cap of {cap} rows")
    for t in tables[1:]:
        col_pos = {c: i for i, c in enumerate(cols)}
        shared = [c for c in t.columns if c in col_pos]
        left_pos = [col_pos[c] for c in shared]
        right_pos = [t.columns.index(c) for c in shared]
        new_pos = [i for i, c in enumerate(t.columns) if c not in col_pos]
        index: dict[tuple, list] = {}
        for j, row in enumerate(t.rows):
            key = tuple(row[p] for p in right_pos)
            index.setdefault(key, []).append((j, [row[p] for p in new_pos]))
        out_rows, out_origins = [], []
        for row, org in zip(rows, origins):
            key = tuple(row[p] for p in left_pos)
            for j, extra in index.get(key, ()):
                out_rows.append(row + extra)
                out_origins.append(org + [j])
                if len(out_rows) > cap:
                    raise ResourceCapError(f"join exceeds cap of {cap} rows")
        rows, origins = out_rows, out_origins
        cols.extend(t.columns[i] for i in new_pos)
    values = np.array(rows, dtype=np.float64) if rows else np.zeros((0, len(cols)))
    origin_arr = (
        np.array(origins, dtype=np.int64)
        if origins
        else np.zeros((0, len(tables)), dtype=np.int64)
    )
    if len(rows) > 1:
        keys = [origin_arr[:, i] for i in range(origin_arr.shape[1] - 1, -1, -1)]
        keys += [values[:, i] for i in range(values.shape[1] - 1, -1, -1)]
        order = np.lexsort(keys)
        values = values[order]
        origin_arr = origin_arr[order]
    return DesignMatrix(tuple(cols), values, origin_arr, label=label)


# ---------------------------------------------------------------------------
# Dataset: tables + label + cached derived structures
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class JoinSpec:
    """Declarative join description: named table files, label, row cap."""

    tables: tuple[tuple[str, str], ...]  # (name, path)
    label: str
    join_cap: int = DEFAULT_JOIN_CAP

    @classmethod
    def from_document(cls, doc: dict, base: Path | None = None) -> "JoinSpec":
        try:
            entries = doc["tables"]
            label = doc["label"]
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"join spec missing required key: {exc}") from None
        if not isinstance(entries, list) or not entries:
            raise SchemaError("join spec needs a non-empty 'tables' list")
        pairs = []
        for entry in entries:
            try:
                name, path = entry["name"], entry["path"]
            except (KeyError, TypeError) as exc:
                raise SchemaError(f"table entry missing key: {exc}") from None
            if base is not None:
                path = str((base / path).resolve())
            pairs.append((str(name), str(path)))
        cap = doc.get("join_cap", DEFAULT_JOIN_CAP)
        if not isinstance(cap, int) or cap < 1:
            raise SchemaError("join_cap must be a positive integer")
        return cls(tuple(pairs), str(label), cap)

    @classmethod
    def load(cls, path) -> "JoinSpec":
        path = Path(path)
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        return cls.from_document(doc, base=path.parent)


@dataclass(frozen=True)
class SortedColumn:
    """Stable sort of one table column plus its distinct-value blocks."""

    order: np.ndarray  # row indices, ascending by value
    starts: np.ndarray  # first sorted position of each distinct value
    thresholds: np.ndarray  # the distinct values themselves


class Dataset:
    """Input tables plus the declared label column.

    Caches the hypergraph, per-root join trees, sorted column views, and the
    materialized join so repeated training queries stay cheap.  Immutable
    after construction.
    """

    def __init__(self, tables, label: str, join_cap: int = DEFAULT_JOIN_CAP):
        self.tables: tuple[Table, ...] = tuple(tables)
        if not self.tables:
            raise SchemaError("dataset needs at least one table")
        names = [t.name for t in self.tables]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate table names in dataset")
        holders = [i for i, t in enumerate(self.tables) if label in t.columns]
        if len(holders) != 1:
            raise SchemaError(
                f"label column {label!r} must appear in exactly one table, "
                f"found in {len(holders)}"
            )
        self.label = label
        self.label_table = holders[0]
        self.join_cap = join_cap
        features: dict[str, None] = {}
        owner: dict[str, int] = {}
        for i, t in enumerate(self.tables):
            for c in t.columns:
                features.setdefault(c)
                owner.setdefault(c, i)
        self.features = tuple(features)
        self.owner = owner
        self._memo: dict = {}

    @property
    def n_tables(self) -> int:
        return len(self.tables)

    def table_index(self, name: str) -> int:
        for i, t in enumerate(self.tables):
            if t.name == name:
                return i
        raise SchemaError(f"unknown table {name!r}")

    def memo(self, key, builder):
        if key not in self._memo:
            self._memo[key] = builder()
        return self._memo[key]

    @property
    def hypergraph(self) -> JoinHypergraph:
        return self.memo("hypergraph", lambda: build_hypergraph(self.tables))

    @property
    def acyclicity(self) -> AcyclicityResult:
        return self.memo("acyclicity", lambda: check_acyclic(self.hypergraph))

    def join_tree(self, root: int | str) -> JoinTree:
        idx = root if isinstance(root, int) else self.table_index(root)
        return self.memo(
            ("tree", idx),
            lambda: build_join_tree(self.hypergraph, self.tables[idx].name),
        )

    def materialize(self, cap: int | None = None) -> DesignMatrix:
        cap = self.join_cap if cap is None else cap
        return self.memo(
            ("join", cap),
            lambda: materialize_join(self.tables, cap=cap, label=self.label),
        )

    def split_features(self) -> tuple[tuple[int, int, str], ...]:
        """Candidate split features as (owner table, column position, name).

        Each feature is enumerated once, at the lowest-index table that
        contains it; the label column is never a split feature.
        """

        def build():
            out = []
            for i, t in enumerate(self.tables):
                for pos, c in enumerate(t.columns):
                    if c != self.label and self.owner[c] == i:
                        out.append((i, pos, c))
            return tuple(out)

        return self.memo("split_features", build)

    def sorted_column(self, table_idx: int, pos: int) -> SortedColumn:
        def build():
            values = self.tables[table_idx].column_values(pos)
            order = np.argsort(values, kind="stable")
            sorted_vals = values[order]
            if sorted_vals.size == 0:
                starts = np.zeros(0, dtype=np.int64)
                thresholds = sorted_vals
            else:
                change = np.nonzero(np.diff(sorted_vals))[0] + 1
                starts = np.concatenate(([0], change))
                thresholds = sorted_vals[starts]
            return SortedColumn(order, starts, thresholds)

        return self.memo(("sorted", table_idx, pos), build)

    def fingerprint(self) -> str:
        def build():
            digest = hashlib.sha256()
            payload = {
                "label": self.label,
                "tables": [
                    {"name": t.name, "columns": list(t.columns), "rows": [list(r) for r in t.rows]}
                    for t in self.tables
                ],
            }
            digest.update(json.dumps(payload, sort_keys=True).encode())
            return digest.hexdigest()

        return self.memo("fingerprint", build)

    @classmethod
    def from_spec(cls, spec: JoinSpec) -> "Dataset":
        tables = [load_table_path(path, name) for name, path in spec.tables]
        return cls(tables, spec.label, join_cap=spec.join_cap)
