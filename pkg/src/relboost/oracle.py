"""Ground-truth training over the materialized join.

The oracle shares the grower, candidate thresholds, objective, tie-breaking,
and guards with the relational trainer, so any disagreement between the two
paths points at the query engine rather than at convention drift.  It is
deliberately simple and capped to desk scale.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .model import Ensemble, RegressionTree
from .relational import Dataset, DesignMatrix
from .split import SplitCandidate, score_candidates, select_from_scored
from .trainer import GrowthRecord, TrainConfig, _NodeEval, _grow


def predict_matrix(tree: RegressionTree, dm: DesignMatrix) -> np.ndarray:
    """Vectorized per-row predictions by mask routing."""
    out = np.zeros(dm.n)
    pending = [(0, np.ones(dm.n, dtype=bool))]
    while pending:
        nid, mask = pending.pop()
        node = tree.nodes[nid]
        if node.is_leaf:
            out[mask] = node.value
            continue
        col = dm.column(node.split.feature)
        right = mask & (col >= node.split.threshold)
        pending.append((node.right, right))
        pending.append((node.left, mask & ~right))
    return out


def predict_matrix_ensemble(trees, dm: DesignMatrix) -> np.ndarray:
    out = np.zeros(dm.n)
    for tree in trees:
        out += predict_matrix(tree, dm)
    return out


def _gate_mask(dm: DesignMatrix, gates) -> np.ndarray:
    mask = np.ones(dm.n, dtype=bool)
    for feature, iv in gates.items():
        col = dm.column(feature)
        mask &= (col >= iv.lo) & (col < iv.hi)
    return mask


def ssr_oracle(dm: DesignMatrix, trees, gates=None) -> float:
    """Exact sum of squared residuals over the constrained join region."""
    mask = _gate_mask(dm, gates or {})
    labels = dm.column(dm.label)
    res = labels[mask] - predict_matrix_ensemble(trees, dm)[mask]
    return float((res * res).sum())


class _MatrixEvaluator:
    """Node evaluation by direct scans of the design matrix.

    Targets are labels for the first tree and residuals afterwards.
    Candidate thresholds come from the owning tables' distinct column
    values, the same lists the relational path uses.
    """

    def __init__(self, ds: Dataset, dm: DesignMatrix, targets, config, keep=False):
        self.ds = ds
        self.dm = dm
        self.targets = targets
        self.config = config
        self.keep_candidates = keep
        self.prior_leaves: tuple = ()

    def evaluate(self, gates, want_split, node_id, noise_scale=None):
        dm = self.dm
        mask = _gate_mask(dm, gates)
        t = self.targets[mask]
        count = float(mask.sum())
        total = float(t.sum())
        total_sq = float((t * t).sum())
        scale = abs(total_sq) if noise_scale is None else noise_scale
        choice, kept = None, None
        if want_split:
            cands = []
            for t_idx, pos, name in self.ds.split_features():
                sc = self.ds.sorted_column(t_idx, pos)
                if sc.thresholds.size < 2:
                    continue
                col = dm.column(name)[mask]
                order = np.argsort(col, kind="stable")
                sorted_vals = col[order]
                ct = np.cumsum(t[order])
                cq = np.cumsum(t[order] * t[order])
                for alpha in sc.thresholds[1:]:
                    i = int(np.searchsorted(sorted_vals, alpha, side="left"))
                    n_left = float(i)
                    n_right = count - n_left
                    if i == 0:
                        s_left = sq_left = 0.0
                    else:
                        s_left = float(ct[i - 1])
                        sq_left = float(cq[i - 1])
                    cands.append(
                        SplitCandidate(
                            table_index=t_idx,
                            feature=name,
                            feature_pos=pos,
                            threshold=float(alpha),
                            n_left=n_left,
                            sum_left=s_left,
                            sq_left=sq_left,
                            n_right=n_right,
                            sum_right=total - s_left,
                            sq_right=total_sq - sq_left,
                        )
                    )
            scored = score_candidates(cands, self.config.min_node)
            choice = select_from_scored(scored, scale)
            if self.keep_candidates:
                kept = tuple(
                    (c.table_index, c.feature_pos, c.threshold, obj)
                    for obj, c in scored
                )
        return _NodeEval(count, total, total_sq, choice, kept)


@dataclass
class OracleReport:
    """Per-node growth records plus wall time for a ground-truth run."""

    records: list
    wall_time: float


def train_tree_oracle(
    ds: Dataset,
    config: TrainConfig,
    dm: DesignMatrix | None = None,
    keep_candidates: bool = False,
) -> tuple[RegressionTree, OracleReport]:
    """Greedy single tree trained directly on the materialized join."""
    t0 = time.perf_counter()
    dm = ds.materialize() if dm is None else dm
    labels = dm.column(ds.label)
    records: list[GrowthRecord] = []
    evaluator = _MatrixEvaluator(ds, dm, labels, config, keep=keep_candidates)
    tree, _ = _grow(ds, config, evaluator, 0, log=records)
    return tree, OracleReport(records, time.perf_counter() - t0)


def train_boosted_oracle(
    ds: Dataset,
    config: TrainConfig,
    m_target: int,
    dm: DesignMatrix | None = None,
    keep_candidates: bool = False,
) -> tuple[Ensemble, OracleReport]:
    """Greedy boosted ensemble fitting residuals on the materialized join."""
    t0 = time.perf_counter()
    dm = ds.materialize() if dm is None else dm
    labels = dm.column(ds.label)
    records: list[GrowthRecord] = []
    trees: list[RegressionTree] = []
    residuals = labels.copy()
    noise_scale = None
    for i in range(m_target):
        evaluator = _MatrixEvaluator(ds, dm, residuals, config, keep=keep_candidates)
        evaluator.prior_leaves = tuple(t.leaf_count for t in trees)
        tree, noise_scale = _grow(
            ds, config, evaluator, i, log=records, noise_scale=noise_scale
        )
        trees.append(tree)
        residuals = residuals - predict_matrix(tree, dm)
    ensemble = Ensemble(tuple(trees), ds.label)
    return ensemble, OracleReport(records, time.perf_counter() - t0)


def node_candidates_oracle(
    ds: Dataset, dm: DesignMatrix, trees, gates, config: TrainConfig
):
    """Exact scored candidates for one node given prior trees.

    Returns (best SplitChoice or None, {(table, pos, threshold): objective}).
    Used to judge sketch-mode decisions against exact objectives.
    """
    labels = dm.column(ds.label)
    residuals = labels - predict_matrix_ensemble(trees, dm)
    evaluator = _MatrixEvaluator(ds, dm, residuals, config, keep=True)
    ev = evaluator.evaluate(gates, True, 0, noise_scale=float((labels * labels).sum()))
    table = {(t, p, a): obj for t, p, a, obj in (ev.candidates or ())}
    return ev.choice, table
