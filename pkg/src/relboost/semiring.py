"""Commutative semirings and SumProd evaluation over join trees.

A SumProd query aggregates, over the rows of the (never materialized) join,
the semiring product of per-feature factor values.  Evaluation runs message
passing from the leaves of a join tree to its root; grouping by a table is
evaluation with that table's bag as the root.  A brute-force fold over a
materialized join backs the evaluator in tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .errors import QueryError
from .intervals import Interval
from .relational import DesignMatrix, JoinTree, Table


@dataclass(frozen=True)
class Semiring:
    """Binary operations plus their identities; values may be vectors.

    ``plus`` and ``times`` must be pure (never mutate operands).  ``width``
    describes the value shape: 1 for scalars, k for length-k coefficient
    vectors.
    """

    plus: Callable
    times: Callable
    zero_value: object
    one_value: object
    width: int = 1
    name: str = ""

    def zero(self):
        z = self.zero_value
        return z.copy() if isinstance(z, np.ndarray) else z

    def one(self):
        o = self.one_value
        return o.copy() if isinstance(o, np.ndarray) else o


def _add(a, b):
    return a + b


def _mul(a, b):
    return a * b


REAL = Semiring(_add, _mul, 0.0, 1.0, width=1, name="real")


@dataclass(frozen=True)
class SumProdQuery:
    """Per-feature factor functions plus interval gates.

    ``factors`` maps a feature name to a callable on its value; features not
    listed contribute the multiplicative identity.  ``gates`` are half-open
    interval constraints, conjoined, applied as zero/one multiplicative gates
    at the table that owns the feature.  ``table_factors`` (one callable per
    table, taking the table row) replaces per-feature factors for queries
    whose factor is a joint function of a table's row, such as sketch
    monomials; gates still apply.
    """

    factors: tuple[tuple[str, Callable], ...] = ()
    gates: tuple[tuple[str, Interval], ...] = ()
    table_factors: tuple[Callable | None, ...] | None = None

    @classmethod
    def counting(cls, gates: Mapping[str, Interval] | None = None) -> "SumProdQuery":
        return cls(gates=_norm_gates(gates))

    @classmethod
    def feature_map(
        cls,
        factors: Mapping[str, Callable],
        gates: Mapping[str, Interval] | None = None,
    ) -> "SumProdQuery":
        return cls(factors=tuple(factors.items()), gates=_norm_gates(gates))

    @classmethod
    def per_table(
        cls,
        table_factors,
        gates: Mapping[str, Interval] | None = None,
    ) -> "SumProdQuery":
        return cls(gates=_norm_gates(gates), table_factors=tuple(table_factors))


def _norm_gates(gates) -> tuple:
    if not gates:
        return ()
    return tuple(gates.items())


@dataclass
class _NodePlan:
    gate_checks: list  # (column position, lo, hi)
    factor_calls: list  # (column position, callable)
    table_factor: Callable | None = None


def _lowest_owner(tables: tuple[Table, ...]) -> dict[str, int]:
    owner: dict[str, int] = {}
    for i, t in enumerate(tables):
        for c in t.columns:
            owner.setdefault(c, i)
    return owner


def _compile(tables: tuple[Table, ...], q: SumProdQuery) -> list[_NodePlan]:
    owner = _lowest_owner(tables)
    plans = [_NodePlan([], []) for _ in tables]
    for feature, iv in q.gates:
        if feature not in owner:
            raise QueryError(f"gate references unknown feature {feature!r}")
        t = owner[feature]
        pos = tables[t].columns.index(feature)
        plans[t].gate_checks.append((pos, iv.lo, iv.hi))
    if q.table_factors is not None:
        if len(q.table_factors) != len(tables):
            raise QueryError(
                f"query has {len(q.table_factors)} table factors for "
                f"{len(tables)} tables"
            )
        for t, fn in enumerate(q.table_factors):
            plans[t].table_factor = fn
    else:
        for feature, fn in q.factors:
            if feature not in owner:
                raise QueryError(f"factor references unknown feature {feature!r}")
            if fn is None:
                continue
            t = owner[feature]
            pos = tables[t].columns.index(feature)
            plans[t].factor_calls.append((pos, fn))
    return plans


def _local_value(plan: _NodePlan, row, semiring: Semiring):
    """Factor value for one table row, or None when a gate rejects it."""
    for pos, lo, hi in plan.gate_checks:
        if not lo <= row[pos] < hi:
            return None
    if plan.table_factor is not None:
        return plan.table_factor(row)
    value = semiring.one()
    for pos, fn in plan.factor_calls:
        value = semiring.times(value, fn(row[pos]))
    return value


def _message_pass(tree: JoinTree, plans, semiring: Semiring, grouped: bool):
    messages: dict[int, dict] = {}
    root = tree.root
    for nid in tree.postorder:
        table = tree.tables[nid]
        plan = plans[nid]
        kids = [
            (c, tree.parent_key_pos[c], messages[c]) for c in tree.children[nid]
        ]
        if nid == root:
            if grouped:
                result = [semiring.zero() for _ in range(table.n)]
            else:
                result = semiring.zero()
        else:
            out: dict = {}
            key_pos = tree.child_key_pos[nid]
        for ridx, row in enumerate(table.rows):
            value = _local_value(plan, row, semiring)
            if value is None:
                continue
            dead = False
            for _, pos, msg in kids:
                mv = msg.get(tuple(row[p] for p in pos))
                if mv is None:
                    dead = True
                    break
                value = semiring.times(value, mv)
            if dead:
                continue
            if nid == root:
                if grouped:
                    result[ridx] = value
                else:
                    result = semiring.plus(result, value)
            else:
                key = tuple(row[p] for p in key_pos)
                prev = out.get(key)
                out[key] = value if prev is None else semiring.plus(prev, value)
        if nid != root:
            messages[nid] = out
    return result


def eval_sumprod(tree: JoinTree, q: SumProdQuery, semiring: Semiring):
    """Aggregate the query over all join rows without materializing them."""
    plans = _compile(tree.tables, q)
    return _message_pass(tree, plans, semiring, grouped=False)


@dataclass(frozen=True)
class GroupedResult:
    """Per-row aggregates for the grouping table; empty extensions are zero."""

    table_index: int
    values: list

    def total(self, semiring: Semiring):
        acc = semiring.zero()
        for v in self.values:
            acc = semiring.plus(acc, v)
        return acc


def eval_sumprod_grouped(
    tree: JoinTree, group_table: str, q: SumProdQuery, semiring: Semiring
) -> GroupedResult:
    """Evaluate the query once per row of ``group_table``.

    The tree must already be rooted at the grouping table (build it with that
    root); each row of the root receives the aggregate over its own join
    extension.
    """
    names = [t.name for t in tree.tables]
    if group_table not in names:
        raise QueryError(f"group table {group_table!r} is not in the schema")
    gidx = names.index(group_table)
    if gidx != tree.root:
        raise QueryError(
            f"tree is rooted at {names[tree.root]!r}, not at group table "
            f"{group_table!r}; re-root first"
        )
    plans = _compile(tree.tables, q)
    values = _message_pass(tree, plans, semiring, grouped=True)
    return GroupedResult(gidx, values)


def eval_bruteforce(
    dm: DesignMatrix,
    q: SumProdQuery,
    semiring: Semiring,
    tables: tuple[Table, ...] | None = None,
):
    """Direct fold over a materialized join; the differential-testing anchor."""
    if q.table_factors is not None:
        if tables is None:
            raise QueryError("per-table queries need the source tables")
        col_pos = {c: i for i, c in enumerate(dm.columns)}
        projections = [
            tuple(col_pos[c] for c in t.columns) for t in tables
        ]
        plans = _compile(tables, q)
        acc = semiring.zero()
        for row in dm.values:
            value = semiring.one()
            dead = False
            for proj, plan in zip(projections, plans):
                sub = tuple(row[p] for p in proj)
                v = _local_value(plan, sub, semiring)
                if v is None:
                    dead = True
                    break
                value = semiring.times(value, v)
            if not dead:
                acc = semiring.plus(acc, value)
        return acc
    col_pos = {c: i for i, c in enumerate(dm.columns)}
    gate_checks = []
    for feature, iv in q.gates:
        if feature not in col_pos:
            raise QueryError(f"gate references unknown feature {feature!r}")
        gate_checks.append((col_pos[feature], iv.lo, iv.hi))
    factor_calls = []
    for feature, fn in q.factors:
        if feature not in col_pos:
            raise QueryError(f"factor references unknown feature {feature!r}")
        if fn is not None:
            factor_calls.append((col_pos[feature], fn))
    acc = semiring.zero()
    for row in dm.values:
        if any(not lo <= row[pos] < hi for pos, lo, hi in gate_checks):
            continue
        value = semiring.one()
        for pos, fn in factor_calls:
            value = semiring.times(value, fn(row[pos]))
        acc = semiring.plus(acc, value)
    return acc
