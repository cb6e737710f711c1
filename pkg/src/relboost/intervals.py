"""Half-open numeric intervals, used as split constraints and query gates.

A split ``feature >= t`` sends satisfying rows right, others left, so a left
branch contributes ``[-inf, t)`` and a right branch ``[t, +inf)``.  Repeated
constraints on one feature are intersected into a single interval, which may
be empty.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class Interval:
    lo: float = -math.inf
    hi: float = math.inf

    def contains(self, x: float) -> bool:
        return self.lo <= x < self.hi

    def intersect(self, other: "Interval") -> "Interval":
        return Interval(max(self.lo, other.lo), min(self.hi, other.hi))

    @property
    def is_empty(self) -> bool:
        return not self.lo < self.hi

    @classmethod
    def below(cls, hi: float) -> "Interval":
        return cls(-math.inf, hi)

    @classmethod
    def at_least(cls, lo: float) -> "Interval":
        return cls(lo, math.inf)


def intersect_gates(*gate_maps: dict) -> dict:
    """Conjoin constraint maps (feature -> Interval) into one map."""
    out: dict = {}
    for gates in gate_maps:
        for feature, iv in gates.items():
            prev = out.get(feature)
            out[feature] = iv if prev is None else prev.intersect(iv)
    return out
