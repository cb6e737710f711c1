"""Tree training driven entirely by grouped SumProd queries.

Single trees are grown breadth-first from three grouped queries per table
per node (row count, label sum, label square sum).  Boosted trees replace
labels with residuals: residual sums come from per-leaf count queries
against every prior tree, and residual squares are assembled exactly from
label, per-leaf, and leaf-pair queries, or estimated from tensor sketches.
The materialized join is never touched.
"""

from __future__ import annotations

import math
from collections import Counter, deque
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import ConfigError
from .intervals import Interval, intersect_gates
from .model import Ensemble, RegressionTree, SplitCriterion, TreeNode
from .relational import Dataset
from .semiring import REAL, SumProdQuery, eval_sumprod_grouped
from .sketch import DomainIndex, SketchHashes, sketch_norm_sq, sketch_semiring
from .split import (
    SplitChoice,
    improvement_accepts,
    prefix_candidates,
    score_candidates,
    select_from_scored,
)

PHASE_STATS = "stats"
PHASE_LEAF = "leaf_sums"
PHASE_PAIR = "pair_sums"
PHASE_SKETCH = "sketches"


class QueryCounter:
    """Tally of grouped SumProd queries by phase and group table."""

    def __init__(self):
        self.phases: Counter = Counter()
        self.by_table: Counter = Counter()

    def tick(self, phase: str, table: int) -> None:
        self.phases[phase] += 1
        self.by_table[(phase, table)] += 1

    @property
    def total(self) -> int:
        return sum(self.phases.values())

    def per_phase(self) -> dict:
        return {
            phase: self.phases.get(phase, 0)
            for phase in (PHASE_STATS, PHASE_LEAF, PHASE_PAIR, PHASE_SKETCH)
        }

    def snapshot(self) -> Counter:
        return Counter(self.phases)


def default_sketch_width(n_tables: int, epsilon: float, delta: float) -> int:
    """Sketch length guaranteeing the approximate-matrix-product bound."""
    return math.ceil((2 + 3**n_tables) / (epsilon * epsilon * delta))


_CONFIG_KEYS = {
    "max_leaves",
    "max_depth",
    "min_node",
    "mode",
    "epsilon",
    "delta",
    "k",
    "seed",
    "count_queries",
    "trees",
    "shrinkage",
}


@dataclass(frozen=True)
class TrainConfig:
    max_leaves: int = 4
    max_depth: int | None = None
    min_node: int = 1
    mode: str = "exact"
    epsilon: float = 0.5
    delta: float = 0.1
    k: int | None = None
    seed: int = 0
    count_queries: bool = False
    trees: int = 1
    shrinkage: float = 1.0

    def __post_init__(self):
        if self.max_leaves < 1:
            raise ConfigError("max_leaves must be at least 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ConfigError("max_depth must be non-negative")
        if self.min_node < 1:
            raise ConfigError("min_node must be at least 1")
        if self.mode not in ("exact", "sketch"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if not 0 < self.delta < 1:
            raise ConfigError("delta must be in (0, 1)")
        if self.k is not None and self.k < 1:
            raise ConfigError("k must be at least 1")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        if self.trees < 1:
            raise ConfigError("trees must be at least 1")

    def resolve_k(self, n_tables: int) -> int:
        if self.k is not None:
            return self.k
        return default_sketch_width(n_tables, self.epsilon, self.delta)

    @classmethod
    def from_document(cls, doc: dict) -> "TrainConfig":
        if not isinstance(doc, dict):
            raise ConfigError("train config must be a JSON object")
        unknown = set(doc) - _CONFIG_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_document(self) -> dict:
        return {
            "max_leaves": self.max_leaves,
            "max_depth": self.max_depth,
            "min_node": self.min_node,
            "mode": self.mode,
            "epsilon": self.epsilon,
            "delta": self.delta,
            "k": self.k,
            "seed": self.seed,
            "count_queries": self.count_queries,
            "trees": self.trees,
            "shrinkage": self.shrinkage,
        }


@dataclass(frozen=True)
class NodeStats:
    """Per-row aggregates of one grouping table over a node's join region.

    ``target`` is the label for first-tree statistics and the residual for
    boosted statistics; the fields are count, target sum, and target square
    sum, one entry per table row.
    """

    table_index: int
    count: np.ndarray
    target_sum: np.ndarray
    target_sq: np.ndarray


# boosted statistics share the layout; labels are replaced by residuals
ResidualStats = NodeStats


def _identity(x: float) -> float:
    return x


def _square(x: float) -> float:
    return x * x


def _count_query(gates) -> SumProdQuery:
    return SumProdQuery.counting(gates)


def _label_query(ds: Dataset, gates) -> SumProdQuery:
    return SumProdQuery.feature_map({ds.label: _identity}, gates)


def _label_sq_query(ds: Dataset, gates) -> SumProdQuery:
    return SumProdQuery.feature_map({ds.label: _square}, gates)


def _grouped_array(ds, group, query, counter, phase) -> np.ndarray:
    tree = ds.join_tree(group)
    result = eval_sumprod_grouped(tree, ds.tables[group].name, query, REAL)
    if counter is not None:
        counter.tick(phase, group)
    return np.asarray(result.values, dtype=np.float64)


def _grouped_matrix(ds, group, query, semiring, counter, phase) -> np.ndarray:
    tree = ds.join_tree(group)
    result = eval_sumprod_grouped(tree, ds.tables[group].name, query, semiring)
    if counter is not None:
        counter.tick(phase, group)
    if not result.values:
        return np.zeros((0, semiring.width))
    return np.stack(result.values)


# ---------------------------------------------------------------------------
# Grouped statistics
# ---------------------------------------------------------------------------


def node_statistics(ds: Dataset, gates, group_table: int, counter=None) -> NodeStats:
    """Count, label sum, and label square sum per row of the group table,
    restricted to join rows satisfying the node constraints.  Three grouped
    queries."""
    n = _grouped_array(ds, group_table, _count_query(gates), counter, PHASE_STATS)
    s = _grouped_array(ds, group_table, _label_query(ds, gates), counter, PHASE_STATS)
    u = _grouped_array(ds, group_table, _label_sq_query(ds, gates), counter, PHASE_STATS)
    return NodeStats(group_table, n, s, u)


def leaf_sum_queries(
    ds: Dataset,
    gates,
    tree: RegressionTree,
    group_table: int,
    weight_mode: str,
    counter=None,
) -> np.ndarray:
    """Per-row sums over one prior tree's leaf regions within the node.

    ``pred`` weighs each leaf's count by its prediction, ``pred_sq`` by the
    squared prediction, ``label_weighted`` weighs each leaf's label sum by
    its prediction.  One grouped query per leaf.
    """
    if weight_mode not in ("pred", "pred_sq", "label_weighted"):
        raise ConfigError(f"unknown weight mode {weight_mode!r}")
    total = np.zeros(ds.tables[group_table].n)
    for _, value, path in tree.leaf_paths():
        region = intersect_gates(gates, path)
        if weight_mode == "label_weighted":
            vals = _grouped_array(
                ds, group_table, _label_query(ds, region), counter, PHASE_LEAF
            )
            weight = value
        else:
            vals = _grouped_array(
                ds, group_table, _count_query(region), counter, PHASE_LEAF
            )
            weight = value if weight_mode == "pred" else value * value
        total += weight * vals
    return total


def _leaf_aggregates(ds, gates, tree, group_table, counter):
    """Prediction sums, squared-prediction sums, and label-weighted sums for
    one prior tree, sharing the per-leaf count query between the first two
    (two grouped queries per leaf)."""
    n_rows = ds.tables[group_table].n
    pred = np.zeros(n_rows)
    pred_sq = np.zeros(n_rows)
    label_w = np.zeros(n_rows)
    for _, value, path in tree.leaf_paths():
        region = intersect_gates(gates, path)
        counts = _grouped_array(
            ds, group_table, _count_query(region), counter, PHASE_LEAF
        )
        labels = _grouped_array(
            ds, group_table, _label_query(ds, region), counter, PHASE_LEAF
        )
        pred += value * counts
        pred_sq += value * value * counts
        label_w += value * labels
    return pred, pred_sq, label_w


def cross_pair_sums(
    ds: Dataset,
    gates,
    tree_a: RegressionTree,
    tree_b: RegressionTree,
    group_table: int,
    counter=None,
) -> np.ndarray:
    """Per-row sums of the product of two distinct trees' predictions.

    One grouped count query per leaf pair, over the intersection of both
    leaves' path constraints and the node constraints; infeasible
    intersections contribute zero.
    """
    total = np.zeros(ds.tables[group_table].n)
    paths_a = tree_a.leaf_paths()
    paths_b = tree_b.leaf_paths()
    for _, val_a, path_a in paths_a:
        for _, val_b, path_b in paths_b:
            region = intersect_gates(gates, path_a, path_b)
            counts = _grouped_array(
                ds, group_table, _count_query(region), counter, PHASE_PAIR
            )
            total += val_a * val_b * counts
    return total


def residual_sq_exact(
    ds: Dataset, gates, trees, group_table: int, counter=None
) -> np.ndarray:
    """Per-row residual square sums, assembled exactly from queries.

    Expands (y - sum of predictions)^2 as the label square sum, minus twice
    the label-weighted prediction sums, plus squared-prediction sums, plus
    all ordered cross-tree prediction products.
    """
    trees = tuple(trees)
    rsq = _grouped_array(
        ds, group_table, _label_sq_query(ds, gates), counter, PHASE_STATS
    )
    for tree in trees:
        _, pred_sq, label_w = _leaf_aggregates(ds, gates, tree, group_table, counter)
        rsq = rsq + pred_sq - 2.0 * label_w
    for a in range(len(trees)):
        for b in range(len(trees)):
            if a != b:
                rsq = rsq + cross_pair_sums(
                    ds, gates, trees[a], trees[b], group_table, counter
                )
    return rsq


def residual_node_statistics(
    ds: Dataset, gates, trees, group_table: int, counter=None
) -> NodeStats:
    """Count, residual sum, and residual square sum per group-table row.

    Per table this costs 3 base queries, two per leaf of every prior tree,
    and one per ordered leaf pair across distinct prior trees.
    """
    trees = tuple(trees)
    n = _grouped_array(ds, group_table, _count_query(gates), counter, PHASE_STATS)
    ysum = _grouped_array(ds, group_table, _label_query(ds, gates), counter, PHASE_STATS)
    ysq = _grouped_array(
        ds, group_table, _label_sq_query(ds, gates), counter, PHASE_STATS
    )
    rsum = ysum.copy()
    rsq = ysq.copy()
    for tree in trees:
        pred, pred_sq, label_w = _leaf_aggregates(ds, gates, tree, group_table, counter)
        rsum -= pred
        rsq += pred_sq - 2.0 * label_w
    for a in range(len(trees)):
        for b in range(len(trees)):
            if a != b:
                rsq += cross_pair_sums(
                    ds, gates, trees[a], trees[b], group_table, counter
                )
    return NodeStats(group_table, n, rsum, rsq)


# ---------------------------------------------------------------------------
# Split selection over grouped statistics
# ---------------------------------------------------------------------------


def best_split_single(
    ds: Dataset, stats: Mapping[int, NodeStats], min_node: float = 1.0
) -> SplitChoice | None:
    """Lowest-SSE criterion across all tables' label statistics, or None."""
    cands = []
    for t in sorted(stats):
        st = stats[t]
        cands.extend(prefix_candidates(ds, t, st.count, st.target_sum, st.target_sq))
    return select_from_scored(score_candidates(cands, min_node))


def best_split_boosted(
    ds: Dataset, stats: Mapping[int, NodeStats], min_node: float = 1.0
) -> SplitChoice | None:
    """Same machinery as the single-tree split with residual statistics."""
    return best_split_single(ds, stats, min_node)


# ---------------------------------------------------------------------------
# Sketched residual norms
# ---------------------------------------------------------------------------


def _sketch_table_factors(ds, dix, hashes, caches, with_label):
    """Per-table factor callables producing monomial vectors, with the
    label-owning table's factor scaled by the label value when requested."""
    factors = []
    for t in range(ds.n_tables):
        bucket, sign = hashes.families[t]
        cache = caches[t]
        label_pos = None
        if with_label and t == ds.label_table:
            label_pos = ds.tables[t].column_index(ds.label)

        def factor(row, t=t, cache=cache, bucket=bucket, sign=sign, label_pos=label_pos):
            w = dix.index_of(t, row)
            vec = cache.get(w)
            if vec is None:
                vec = np.zeros(hashes.k)
                vec[bucket(w)] = float(sign(w))
                cache[w] = vec
            if label_pos is not None:
                return row[label_pos] * vec
            return vec

        factors.append(factor)
    return factors


def sketch_residual_vectors(
    ds: Dataset,
    gates,
    trees,
    group_table: int,
    hashes: SketchHashes,
    counter=None,
) -> np.ndarray:
    """Per-row sketches of the node's residual vector, one row per group-table
    row, as an (n_rows, k) matrix.

    One polynomial-semiring query sketches the label vector; one per leaf of
    every prior tree sketches that leaf's prediction mass; the residual
    sketch is their difference.  All queries share the hash families, so the
    combination equals the sketch of the residual vector itself.
    """
    trees = tuple(trees)
    dix = ds.memo("domain_index", lambda: DomainIndex.from_dataset(ds))
    semiring = sketch_semiring(hashes.k)
    caches = [dict() for _ in range(ds.n_tables)]
    label_factors = _sketch_table_factors(ds, dix, hashes, caches, with_label=True)
    plain_factors = _sketch_table_factors(ds, dix, hashes, caches, with_label=False)
    query = SumProdQuery.per_table(label_factors, gates)
    sketches = _grouped_matrix(ds, group_table, query, semiring, counter, PHASE_SKETCH)
    for tree in trees:
        for _, value, path in tree.leaf_paths():
            region = intersect_gates(gates, path)
            leaf_q = SumProdQuery.per_table(plain_factors, region)
            leaf_sketch = _grouped_matrix(
                ds, group_table, leaf_q, semiring, counter, PHASE_SKETCH
            )
            sketches = sketches - value * leaf_sketch
    return sketches


def approx_residual_sq(
    sketches: np.ndarray, order: np.ndarray, boundary_ends: np.ndarray
):
    """Estimated left/right residual square sums for every threshold.

    ``sketches`` holds one residual sketch per group-table row; rows are
    prefix-summed in sorted column order, the right sketch is the total
    minus the left, and each side's estimate is its squared norm.
    """
    cum = np.cumsum(sketches[order], axis=0)
    left = cum[boundary_ends]
    right = cum[-1][None, :] - left
    return (
        np.einsum("ij,ij->i", left, left),
        np.einsum("ij,ij->i", right, right),
    )


# ---------------------------------------------------------------------------
# Node evaluators and the breadth-first grower
# ---------------------------------------------------------------------------


@dataclass
class _NodeEval:
    count: float
    total: float
    total_sq: float
    choice: SplitChoice | None
    candidates: tuple | None = None


def _finish_split(ds, all_cands, min_node, keep, scale):
    scored = score_candidates(all_cands, min_node)
    choice = select_from_scored(scored, scale)
    kept = None
    if keep:
        kept = tuple(
            (c.table_index, c.feature_pos, c.threshold, obj) for obj, c in scored
        )
    return choice, kept


class _LabelEvaluator:
    """First-tree node evaluation: three grouped queries per table."""

    prior_leaves: tuple = ()

    def __init__(self, ds, config, counter):
        self.ds = ds
        self.config = config
        self.counter = counter
        self.keep_candidates = False

    def evaluate(self, gates, want_split, node_id, noise_scale=None):
        ds = self.ds
        stats = {
            i: node_statistics(ds, gates, i, counter=self.counter)
            for i in range(ds.n_tables)
        }
        st0 = stats[0]
        total_sq = float(st0.target_sq.sum())
        scale = abs(total_sq) if noise_scale is None else noise_scale
        choice, kept = None, None
        if want_split:
            cands = []
            for i in range(ds.n_tables):
                st = stats[i]
                cands.extend(
                    prefix_candidates(ds, i, st.count, st.target_sum, st.target_sq)
                )
            choice, kept = _finish_split(
                ds, cands, self.config.min_node, self.keep_candidates, scale
            )
        return _NodeEval(
            float(st0.count.sum()),
            float(st0.target_sum.sum()),
            total_sq,
            choice,
            kept,
        )


class _ExactResidualEvaluator:
    """Boosted node evaluation with exactly assembled residual squares."""

    def __init__(self, ds, trees, config, counter):
        self.ds = ds
        self.trees = tuple(trees)
        self.config = config
        self.counter = counter
        self.keep_candidates = False
        self.prior_leaves = tuple(t.leaf_count for t in self.trees)

    def evaluate(self, gates, want_split, node_id, noise_scale=None):
        ds = self.ds
        stats = {
            i: residual_node_statistics(ds, gates, self.trees, i, counter=self.counter)
            for i in range(ds.n_tables)
        }
        st0 = stats[0]
        total_sq = float(st0.target_sq.sum())
        scale = abs(total_sq) if noise_scale is None else noise_scale
        choice, kept = None, None
        if want_split:
            cands = []
            for i in range(ds.n_tables):
                st = stats[i]
                cands.extend(
                    prefix_candidates(ds, i, st.count, st.target_sum, st.target_sq)
                )
            choice, kept = _finish_split(
                ds, cands, self.config.min_node, self.keep_candidates, scale
            )
        return _NodeEval(
            float(st0.count.sum()),
            float(st0.target_sum.sum()),
            total_sq,
            choice,
            kept,
        )


class _SketchResidualEvaluator:
    """Boosted node evaluation with sketched residual square estimates.

    Residual sums and counts stay exact; only the square terms come from the
    sketches.  Each node draws fresh hash families from (seed, tree, node),
    shared across the label sketch and every leaf sketch of that node.
    """

    def __init__(self, ds, trees, config, counter, tree_index):
        self.ds = ds
        self.trees = tuple(trees)
        self.config = config
        self.counter = counter
        self.tree_index = tree_index
        self.k = config.resolve_k(ds.n_tables)
        self.keep_candidates = False
        self.prior_leaves = tuple(t.leaf_count for t in self.trees)

    def evaluate(self, gates, want_split, node_id, noise_scale=None):
        ds = self.ds
        hashes = SketchHashes.from_seed(
            [self.config.seed, self.tree_index, node_id], ds.n_tables, self.k
        )
        counts, rsums, sketches = {}, {}, {}
        for i in range(ds.n_tables):
            n = _grouped_array(ds, i, _count_query(gates), self.counter, PHASE_STATS)
            ysum = _grouped_array(
                ds, i, _label_query(ds, gates), self.counter, PHASE_STATS
            )
            pred = np.zeros(ds.tables[i].n)
            for tree in self.trees:
                pred += leaf_sum_queries(ds, gates, tree, i, "pred", self.counter)
            counts[i] = n
            rsums[i] = ysum - pred
            sketches[i] = sketch_residual_vectors(
                ds, gates, self.trees, i, hashes, self.counter
            )
        count = float(counts[0].sum())
        total = float(rsums[0].sum())
        total_sq = sketch_norm_sq(sketches[0].sum(axis=0))
        scale = abs(total_sq) if noise_scale is None else noise_scale
        choice, kept = None, None
        if want_split:
            cands = []
            for i in range(ds.n_tables):

                def provider(order, ends, S=sketches[i]):
                    return approx_residual_sq(S, order, ends)

                cands.extend(
                    prefix_candidates(
                        ds, i, counts[i], rsums[i], None, sq_provider=provider
                    )
                )
            choice, kept = _finish_split(
                ds, cands, self.config.min_node, self.keep_candidates, scale
            )
        return _NodeEval(count, total, total_sq, choice, kept)


@dataclass
class GrowthRecord:
    """One node evaluation: statistics, the chosen split, and context."""

    tree_index: int
    node_id: int
    depth: int
    gates: dict
    count: float
    mean: float
    sse: float
    choice: SplitChoice | None
    accepted: bool
    searched: bool
    prior_leaves: tuple
    candidates: tuple | None = None


@dataclass
class _BuildNode:
    depth: int
    gates: dict
    value: float | None = None
    split: SplitCriterion | None = None
    left: int = -1
    right: int = -1


def _grow(
    ds, config, evaluator, tree_index, log=None, noise_scale=None
) -> tuple[RegressionTree, float]:
    """Breadth-first growth to at most ``max_leaves`` leaves.

    Nodes are evaluated in creation order while the leaf budget and depth cap
    allow further splitting; nodes cut off by either guard keep the
    prediction recorded when their parent split.  A node whose best split
    does not clear the improvement noise floor stays a leaf.  The noise
    floor scales with the label energy captured at the first evaluated root,
    which is also returned so later trees of a run share it.
    """
    nodes = [_BuildNode(0, {})]
    queue = deque([0])
    leaf_count = 1
    while queue:
        nid = queue.popleft()
        node = nodes[nid]
        depth_ok = config.max_depth is None or node.depth < config.max_depth
        can_split = leaf_count < config.max_leaves and depth_ok
        if nid != 0 and not can_split:
            continue
        ev = evaluator.evaluate(node.gates, can_split, nid, noise_scale)
        if ev.count <= 0:
            raise ConfigError("the join is empty; nothing to train on")
        if noise_scale is None:
            noise_scale = abs(ev.total_sq)
        node.value = ev.total / ev.count
        sse = ev.total_sq - ev.total * ev.total / ev.count
        choice = ev.choice
        accepted = choice is not None and improvement_accepts(
            sse, choice.objective, noise_scale
        )
        if log is not None:
            log.append(
                GrowthRecord(
                    tree_index=tree_index,
                    node_id=nid,
                    depth=node.depth,
                    gates=dict(node.gates),
                    count=ev.count,
                    mean=node.value,
                    sse=sse,
                    choice=choice,
                    accepted=accepted,
                    searched=can_split,
                    prior_leaves=evaluator.prior_leaves,
                    candidates=ev.candidates,
                )
            )
        if not accepted:
            continue
        feature = choice.feature
        left_gates = intersect_gates(
            node.gates, {feature: Interval.below(choice.threshold)}
        )
        right_gates = intersect_gates(
            node.gates, {feature: Interval.at_least(choice.threshold)}
        )
        left_id = len(nodes)
        nodes.append(_BuildNode(node.depth + 1, left_gates, value=choice.pred_left))
        right_id = len(nodes)
        nodes.append(_BuildNode(node.depth + 1, right_gates, value=choice.pred_right))
        node.split = SplitCriterion(choice.feature, choice.threshold, choice.table_index)
        node.left, node.right = left_id, right_id
        leaf_count += 1
        queue.append(left_id)
        queue.append(right_id)
    shrink = config.shrinkage
    built = tuple(
        TreeNode(split=n.split, left=n.left, right=n.right)
        if n.split is not None
        else TreeNode(value=n.value * shrink)
        for n in nodes
    )
    return RegressionTree(built), noise_scale


def train_tree(
    ds: Dataset, config: TrainConfig, counter=None, log=None, keep_candidates=False
) -> RegressionTree:
    """Grow a single tree on the labels via grouped queries."""
    ds.join_tree(0)  # rejects cyclic schemas before any query runs
    evaluator = _LabelEvaluator(ds, config, counter)
    evaluator.keep_candidates = keep_candidates
    tree, _ = _grow(ds, config, evaluator, 0, log)
    return tree


def _make_evaluator(ds, trees, config, counter, tree_index):
    if not trees:
        return _LabelEvaluator(ds, config, counter)
    if config.mode == "exact":
        return _ExactResidualEvaluator(ds, trees, config, counter)
    return _SketchResidualEvaluator(ds, trees, config, counter, tree_index)


def train_boosted(
    ds: Dataset,
    config: TrainConfig,
    m_target: int,
    counter=None,
    log=None,
    keep_candidates=False,
) -> Ensemble:
    """Train ``m_target`` trees, each fitting the residuals of its
    predecessors; the first tree is always the plain single-tree path."""
    if m_target < 1:
        raise ConfigError("m_target must be at least 1")
    ds.join_tree(0)
    trees: list[RegressionTree] = []
    noise_scale = None
    for i in range(m_target):
        evaluator = _make_evaluator(ds, tuple(trees), config, counter, i)
        evaluator.keep_candidates = keep_candidates
        tree, noise_scale = _grow(
            ds, config, evaluator, i, log, noise_scale=noise_scale
        )
        trees.append(tree)
    return Ensemble(tuple(trees), ds.label)
