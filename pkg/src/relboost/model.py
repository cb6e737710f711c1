"""Regression trees and boosted ensembles: prediction, residuals, JSON I/O.

A split routes rows with value >= threshold to the right child and the rest
to the left.  Models are immutable after construction; prediction is pure.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Mapping

from .errors import ModelFormatError, SchemaError
from .intervals import Interval, intersect_gates

MODEL_VERSION = 1


@dataclass(frozen=True)
class SplitCriterion:
    """feature >= threshold routes right; < threshold routes left.

    ``table_index`` records which input table owns the feature during
    training; it is not serialized and is ignored by equality checks.
    """

    feature: str
    threshold: float
    table_index: int | None = field(default=None, compare=False)

    def routes_right(self, value: float) -> bool:
        return value >= self.threshold


@dataclass(frozen=True)
class TreeNode:
    """Either an internal node (split set) or a leaf (value set)."""

    split: SplitCriterion | None = None
    left: int = -1
    right: int = -1
    value: float | None = None

    @property
    def is_leaf(self) -> bool:
        return self.split is None


@dataclass(frozen=True)
class RegressionTree:
    """Binary regression tree stored as a flat node array, root at index 0."""

    nodes: tuple[TreeNode, ...]

    def __post_init__(self):
        if not self.nodes:
            raise ModelFormatError("a tree needs at least one node")

    @property
    def leaf_count(self) -> int:
        return sum(1 for n in self.nodes if n.is_leaf)

    def predict(self, row: Mapping[str, float]) -> float:
        nid = 0
        while True:
            node = self.nodes[nid]
            if node.is_leaf:
                return node.value
            try:
                x = row[node.split.feature]
            except KeyError:
                raise SchemaError(
                    f"row is missing feature {node.split.feature!r}"
                ) from None
            nid = node.right if node.split.routes_right(x) else node.left

    def leaf_paths(self) -> list[tuple[int, float, dict[str, Interval]]]:
        """Every leaf with its prediction and compiled path constraints.

        Repeated constraints on one feature along the path are intersected
        into a single interval.
        """
        out = []
        stack = [(0, {})]
        while stack:
            nid, gates = stack.pop()
            node = self.nodes[nid]
            if node.is_leaf:
                out.append((nid, node.value, gates))
                continue
            f, t = node.split.feature, node.split.threshold
            stack.append(
                (node.right, intersect_gates(gates, {f: Interval.at_least(t)}))
            )
            stack.append((node.left, intersect_gates(gates, {f: Interval.below(t)})))
        out.sort(key=lambda item: item[0])
        return out

    @classmethod
    def single_leaf(cls, value: float) -> "RegressionTree":
        return cls((TreeNode(value=float(value)),))


@dataclass(frozen=True)
class Ensemble:
    """An ordered sum of regression trees predicting one label column."""

    trees: tuple[RegressionTree, ...]
    label: str

    def predict(self, row: Mapping[str, float]) -> float:
        return sum((t.predict(row) for t in self.trees), 0.0)

    def fingerprint(self) -> str:
        used = sorted(
            {n.split.feature for t in self.trees for n in t.nodes if not n.is_leaf}
        )
        payload = json.dumps({"label": self.label, "features": used})
        return hashlib.sha256(payload.encode()).hexdigest()


def predict_tree(tree: RegressionTree, row: Mapping[str, float]) -> float:
    return tree.predict(row)


def predict_ensemble(ensemble: Ensemble, row: Mapping[str, float]) -> float:
    return ensemble.predict(row)


def residual(ensemble: Ensemble, row: Mapping[str, float], label: float) -> float:
    """Label minus the sum of all trees' predictions."""
    return label - ensemble.predict(row)


# ---------------------------------------------------------------------------
# Serialization: versioned JSON with explicit node arrays
# ---------------------------------------------------------------------------


def serialize(ensemble: Ensemble) -> str:
    doc = {
        "version": MODEL_VERSION,
        "label": ensemble.label,
        "trees": [
            {
                "nodes": [
                    {"leaf": n.value}
                    if n.is_leaf
                    else {
                        "feature": n.split.feature,
                        "threshold": n.split.threshold,
                        "left": n.left,
                        "right": n.right,
                    }
                    for n in t.nodes
                ]
            }
            for t in ensemble.trees
        ],
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def deserialize(text: str) -> Ensemble:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"model document is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ModelFormatError("model document must be a JSON object")
    version = doc.get("version")
    if version != MODEL_VERSION:
        raise ModelFormatError(
            f"unsupported model version {version!r}, expected {MODEL_VERSION}"
        )
    label = doc.get("label")
    if not isinstance(label, str):
        raise ModelFormatError("model document is missing a label column")
    trees = []
    for t_idx, tree_doc in enumerate(doc.get("trees", [])):
        raw = tree_doc.get("nodes") if isinstance(tree_doc, dict) else None
        if not isinstance(raw, list) or not raw:
            raise ModelFormatError(f"tree {t_idx} has no nodes")
        nodes = []
        for n_idx, nd in enumerate(raw):
            if not isinstance(nd, dict):
                raise ModelFormatError(f"tree {t_idx} node {n_idx} is malformed")
            if "leaf" in nd:
                value = nd["leaf"]
                if not isinstance(value, (int, float)) or not math.isfinite(value):
                    raise ModelFormatError(
                        f"tree {t_idx} node {n_idx} has a non-finite leaf value"
                    )
                nodes.append(TreeNode(value=float(value)))
                continue
            try:
                feature = nd["feature"]
                threshold = nd["threshold"]
                left, right = nd["left"], nd["right"]
            except KeyError as exc:
                raise ModelFormatError(
                    f"tree {t_idx} node {n_idx} is missing {exc}"
                ) from None
            if not isinstance(feature, str):
                raise ModelFormatError(f"tree {t_idx} node {n_idx}: bad feature")
            if not isinstance(threshold, (int, float)) or not math.isfinite(threshold):
                raise ModelFormatError(f"tree {t_idx} node {n_idx}: bad threshold")
            if not all(isinstance(i, int) and 0 <= i < len(raw) for i in (left, right)):
                raise ModelFormatError(f"tree {t_idx} node {n_idx}: bad child index")
            nodes.append(
                TreeNode(
                    split=SplitCriterion(feature, float(threshold)),
                    left=left,
                    right=right,
                )
            )
        trees.append(RegressionTree(tuple(nodes)))
    return Ensemble(tuple(trees), label)


# ---------------------------------------------------------------------------
# Structural comparison
# ---------------------------------------------------------------------------


def trees_equal(
    a: RegressionTree, b: RegressionTree, leaf_rtol: float = 1e-9
) -> tuple[bool, str]:
    """Same topology, bit-equal split features/thresholds, leaves within rtol."""
    if len(a.nodes) != len(b.nodes):
        return False, f"node counts differ: {len(a.nodes)} vs {len(b.nodes)}"
    for i, (na, nb) in enumerate(zip(a.nodes, b.nodes)):
        if na.is_leaf != nb.is_leaf:
            return False, f"node {i}: leaf/internal mismatch"
        if na.is_leaf:
            tol = leaf_rtol * max(1.0, abs(na.value), abs(nb.value))
            if abs(na.value - nb.value) > tol:
                return False, f"node {i}: leaf values {na.value} vs {nb.value}"
        else:
            if na.split.feature != nb.split.feature:
                return False, (
                    f"node {i}: features {na.split.feature!r} vs {nb.split.feature!r}"
                )
            if na.split.threshold != nb.split.threshold:
                return False, (
                    f"node {i}: thresholds {na.split.threshold!r} vs "
                    f"{nb.split.threshold!r}"
                )
            if (na.left, na.right) != (nb.left, nb.right):
                return False, f"node {i}: child links differ"
    return True, "identical"


def ensembles_equal(
    a: Ensemble, b: Ensemble, leaf_rtol: float = 1e-9
) -> tuple[bool, str]:
    if len(a.trees) != len(b.trees):
        return False, f"tree counts differ: {len(a.trees)} vs {len(b.trees)}"
    if a.label != b.label:
        return False, f"labels differ: {a.label!r} vs {b.label!r}"
    for i, (ta, tb) in enumerate(zip(a.trees, b.trees)):
        ok, why = trees_equal(ta, tb, leaf_rtol)
        if not ok:
            return False, f"tree {i}: {why}"
    return True, "identical"


def max_leaf_deviation(a: Ensemble, b: Ensemble) -> float:
    """Largest relative difference between matching leaf values."""
    worst = 0.0
    for ta, tb in zip(a.trees, b.trees):
        for na, nb in zip(ta.nodes, tb.nodes):
            if na.is_leaf and nb.is_leaf:
                scale = max(1.0, abs(na.value), abs(nb.value))
                worst = max(worst, abs(na.value - nb.value) / scale)
    return worst
