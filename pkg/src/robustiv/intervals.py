"""Finite unions of disjoint closed intervals over the extended reals.

This is the shape of every inverted test: a confidence set may be a single
interval, a pair of infinite rays, the whole line, or empty. Instances are
canonical (sorted, pairwise disjoint, maximally merged) and immutable, so
set union is associative and commutative and can be folded in any order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .exceptions import ConfigError


def _canonicalize(
    pairs: Iterable[tuple[float, float]],
) -> tuple[tuple[float, float], ...]:
    cleaned = []
    for lo, hi in pairs:
        lo, hi = float(lo), float(hi)
        if math.isnan(lo) or math.isnan(hi):
            raise ConfigError("interval endpoints must not be NaN")
        if lo > hi:
            raise ConfigError(f"interval lower bound {lo} exceeds upper bound {hi}")
        cleaned.append((lo, hi))
    cleaned.sort()
    merged: list[list[float]] = []
    for lo, hi in cleaned:
        if merged and lo <= merged[-1][1]:  # closed intervals: touching merges
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    return tuple((lo, hi) for lo, hi in merged)


@dataclass(frozen=True)
class RealIntervalSet:
    """An ordered union of disjoint closed intervals, endpoints in [-inf, inf]."""

    intervals: tuple[tuple[float, float], ...] = ()

    @classmethod
    def from_intervals(
        cls, pairs: Iterable[Sequence[float]]
    ) -> "RealIntervalSet":
        """Build a canonical set from possibly overlapping/unsorted intervals."""
        return cls(intervals=_canonicalize((p[0], p[1]) for p in pairs))

    @classmethod
    def empty(cls) -> "RealIntervalSet":
        return cls(intervals=())

    @classmethod
    def whole_line(cls) -> "RealIntervalSet":
        return cls(intervals=((-math.inf, math.inf),))

    @property
    def is_empty(self) -> bool:
        return not self.intervals

    @property
    def is_bounded(self) -> bool:
        """True when every endpoint is finite (vacuously true when empty)."""
        return all(math.isfinite(lo) and math.isfinite(hi) for lo, hi in self.intervals)

    @property
    def total_length(self) -> float:
        """Sum of interval lengths; ``inf`` when any interval is unbounded."""
        return float(sum(hi - lo for lo, hi in self.intervals))

    def contains(self, x: float) -> bool:
        """Closed-interval membership."""
        return any(lo <= x <= hi for lo, hi in self.intervals)

    def union(self, other: "RealIntervalSet") -> "RealIntervalSet":
        return RealIntervalSet(
            intervals=_canonicalize(list(self.intervals) + list(other.intervals))
        )

    def __or__(self, other: "RealIntervalSet") -> "RealIntervalSet":
        return self.union(other)

    def is_canonical(self) -> bool:
        """Audit the sorted/disjoint/maximally-merged invariants."""
        return self.intervals == _canonicalize(self.intervals)

    def to_json_obj(self) -> list[list[float | str]]:
        """JSON-safe representation with "-inf"/"inf" string sentinels."""

        def enc(v: float) -> float | str:
            if v == math.inf:
                return "inf"
            if v == -math.inf:
                return "-inf"
            return v

        return [[enc(lo), enc(hi)] for lo, hi in self.intervals]

    @classmethod
    def from_json_obj(cls, obj: Iterable[Sequence[float | str]]) -> "RealIntervalSet":
        """Inverse of :meth:`to_json_obj`; round-trips exactly."""

        def dec(v: float | str) -> float:
            if v == "inf":
                return math.inf
            if v == "-inf":
                return -math.inf
            return float(v)

        return cls.from_intervals([(dec(p[0]), dec(p[1])) for p in obj])

    def __str__(self) -> str:
        if self.is_empty:
            return "{}"
        return " U ".join(f"[{lo:.6g}, {hi:.6g}]" for lo, hi in self.intervals)
