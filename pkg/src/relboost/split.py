"""Split candidate enumeration and selection, shared by the relational
trainer and the design-matrix oracle so that both paths apply bit-identical
conventions (threshold candidates, objective, tie-breaking, guards).

The objective is total SSE of the two children: for sufficient statistics
(n, s, u) per side it is (u - s^2/n) summed over both sides.  Candidate
thresholds are the distinct observed values of the owning table's column;
candidates leaving either child short of ``min_node`` join rows are skipped.
Ties within a small relative tolerance of the minimum objective are broken
by the lexicographically smallest (table index, column position, threshold),
which keeps the choice stable under last-ulp float noise.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

# relative tolerance for grouping objective-minimal candidates into a tie set
TIE_REL_TOL = 1e-10
# minimum relative SSE improvement for a split to be accepted
MIN_IMPROVEMENT_REL = 1e-9


@dataclass(frozen=True)
class SplitCandidate:
    table_index: int
    feature: str
    feature_pos: int
    threshold: float
    n_left: float
    sum_left: float
    sq_left: float
    n_right: float
    sum_right: float
    sq_right: float


@dataclass(frozen=True)
class SplitChoice:
    """The selected criterion with child statistics and total-SSE objective."""

    table_index: int
    feature: str
    feature_pos: int
    threshold: float
    objective: float
    n_left: float
    n_right: float
    pred_left: float
    pred_right: float


def candidate_objective(c: SplitCandidate) -> float:
    left = c.sq_left - c.sum_left * c.sum_left / c.n_left
    right = c.sq_right - c.sum_right * c.sum_right / c.n_right
    return left + right


def score_candidates(
    candidates: Iterable[SplitCandidate], min_node: float = 1.0
) -> list[tuple[float, SplitCandidate]]:
    """Objectives for every candidate whose children meet ``min_node``."""
    scored = []
    for c in candidates:
        if c.n_left < min_node or c.n_right < min_node:
            continue
        scored.append((candidate_objective(c), c))
    return scored


def noise_floor(scale: float) -> float:
    """Absolute SSE tolerance for a node whose statistics were assembled
    from terms of the given magnitude; float cancellation noise sits well
    below this, genuine SSE differences in continuous data well above."""
    return MIN_IMPROVEMENT_REL * max(1.0, abs(scale))


def select_from_scored(
    scored: list[tuple[float, SplitCandidate]], scale: float = 0.0
) -> SplitChoice | None:
    if not scored:
        return None
    best_obj = min(obj for obj, _ in scored)
    tol = max(TIE_REL_TOL * max(1.0, abs(best_obj)), noise_floor(scale))
    tied = [
        (c.table_index, c.feature_pos, c.threshold, obj, c)
        for obj, c in scored
        if obj <= best_obj + tol
    ]
    t_idx, f_pos, threshold, obj, c = min(tied, key=lambda item: item[:3])
    return SplitChoice(
        table_index=t_idx,
        feature=c.feature,
        feature_pos=f_pos,
        threshold=threshold,
        objective=obj,
        n_left=c.n_left,
        n_right=c.n_right,
        pred_left=c.sum_left / c.n_left,
        pred_right=c.sum_right / c.n_right,
    )


def select_best_split(
    candidates: Iterable[SplitCandidate],
    min_node: float = 1.0,
    scale: float = 0.0,
) -> SplitChoice | None:
    return select_from_scored(score_candidates(candidates, min_node), scale)


def improvement_accepts(
    parent_sse: float, objective: float, scale: float | None = None
) -> bool:
    """Accept only splits whose SSE decrease clears the noise floor."""
    return parent_sse - objective > noise_floor(
        parent_sse if scale is None else scale
    )


def prefix_candidates(
    ds,
    table_index: int,
    count: np.ndarray,
    target_sum: np.ndarray,
    target_sq,
    sq_provider=None,
) -> list[SplitCandidate]:
    """Candidates for every feature owned by one table, via prefix sums.

    ``count``/``target_sum``/``target_sq`` hold per-row aggregates for the
    table.  When ``sq_provider`` is given it overrides the per-side
    sum-of-squares: it is called as ``sq_provider(order, boundary_ends)`` and
    must return (left_sq, right_sq) arrays, one entry per candidate.  This is
    how sketched estimates plug into the same selection machinery.
    """
    out = []
    for t_idx, pos, name in ds.split_features():
        if t_idx != table_index:
            continue
        sc = ds.sorted_column(t_idx, pos)
        if sc.thresholds.size < 2:
            continue
        cn = np.cumsum(count[sc.order])
        cs = np.cumsum(target_sum[sc.order])
        ends = sc.starts[1:] - 1  # last sorted index strictly below each threshold
        if sq_provider is None:
            cq = np.cumsum(target_sq[sc.order])
            left_sq = cq[ends]
            right_sq = cq[-1] - left_sq
        else:
            left_sq, right_sq = sq_provider(sc.order, ends)
        n_left = cn[ends]
        s_left = cs[ends]
        n_right = cn[-1] - n_left
        s_right = cs[-1] - s_left
        thresholds = sc.thresholds[1:]
        for i in range(thresholds.size):
            out.append(
                SplitCandidate(
                    table_index=t_idx,
                    feature=name,
                    feature_pos=pos,
                    threshold=float(thresholds[i]),
                    n_left=float(n_left[i]),
                    sum_left=float(s_left[i]),
                    sq_left=float(left_sq[i]),
                    n_right=float(n_right[i]),
                    sum_right=float(s_right[i]),
                    sq_right=float(right_sq[i]),
                )
            )
    return out
