"""Normalized finite unions of closed intervals on the line."""

from __future__ import annotations

import numpy as np


class IntervalUnion:
    """Sorted, disjoint closed intervals ``[lo_j, hi_j]``.

    Intervals closer than ``tol`` are merged on construction, so after
    normalization ``hi_j + tol < lo_{j+1}`` for consecutive intervals.
    """

    __slots__ = ("lo", "hi", "tol")

    def __init__(self, lo=(), hi=(), tol=0.0):
        lo = np.asarray(lo, dtype=float).ravel()
        hi = np.asarray(hi, dtype=float).ravel()
        if lo.shape != hi.shape:
            raise ValueError("lo and hi must have the same length")
        if np.any(hi < lo):
            raise ValueError("interval with hi < lo")
        self.tol = float(tol)
        self.lo, self.hi = _merge(lo, hi, self.tol)
        self.lo.setflags(write=False)
        self.hi.setflags(write=False)

    @classmethod
    def empty(cls, tol=0.0):
        return cls((), (), tol)

    @classmethod
    def from_pairs(cls, pairs, tol=0.0):
        pairs = np.asarray(list(pairs), dtype=float).reshape(-1, 2)
        return cls(pairs[:, 0], pairs[:, 1], tol)

    def __len__(self):
        return len(self.lo)

    def __iter__(self):
        return iter(zip(self.lo.tolist(), self.hi.tolist()))

    def __repr__(self):
        return f"IntervalUnion({self.to_list()!r})"

    def __eq__(self, other):
        return (
            isinstance(other, IntervalUnion)
            and np.array_equal(self.lo, other.lo)
            and np.array_equal(self.hi, other.hi)
        )

    def to_list(self):
        return [[a, b] for a, b in self]

    @property
    def is_empty(self):
        return len(self.lo) == 0

    def total_length(self):
        return float(np.sum(self.hi - self.lo))

    def widths(self):
        return self.hi - self.lo

    def longest(self):
        """The widest interval as ``(lo, hi)``, or None when empty."""
        if self.is_empty:
            return None
        j = int(np.argmax(self.hi - self.lo))
        return float(self.lo[j]), float(self.hi[j])

    def scale(self, a):
        if a >= 0:
            return IntervalUnion(self.lo * a, self.hi * a, self.tol * abs(a))
        return IntervalUnion(self.hi * a, self.lo * a, self.tol * abs(a))

    def union(self, other):
        return IntervalUnion(
            np.concatenate([self.lo, other.lo]),
            np.concatenate([self.hi, other.hi]),
            max(self.tol, other.tol),
        )

    def intersection(self, other):
        tol = max(self.tol, other.tol)
        if self.is_empty or other.is_empty:
            return IntervalUnion.empty(tol)
        i = j = 0
        out_lo, out_hi = [], []
        while i < len(self.lo) and j < len(other.lo):
            lo = max(self.lo[i], other.lo[j])
            hi = min(self.hi[i], other.hi[j])
            if lo <= hi:
                out_lo.append(lo)
                out_hi.append(hi)
            if self.hi[i] < other.hi[j]:
                i += 1
            else:
                j += 1
        return IntervalUnion(out_lo, out_hi, tol)

    def clip(self, lo=-np.inf, hi=np.inf):
        return self.intersection(IntervalUnion([lo], [hi], self.tol))

    def minkowski_sum(self, other, max_pairs=None):
        """``{x + y : x in self, y in other}`` via all pairwise interval sums."""
        tol = max(self.tol, other.tol)
        if self.is_empty or other.is_empty:
            return IntervalUnion.empty(tol)
        if max_pairs is not None and len(self) * len(other) > max_pairs:
            from .core import BudgetExceeded

            raise BudgetExceeded(f"{len(self) * len(other)} interval pairs exceed budget {max_pairs}")
        lo = (self.lo[:, None] + other.lo[None, :]).ravel()
        hi = (self.hi[:, None] + other.hi[None, :]).ravel()
        return IntervalUnion(lo, hi, tol)

    def contains_union(self, other, slack=None):
        """True iff every interval of ``other`` lies inside one of ``self`` (up to ``slack``)."""
        if other.is_empty:
            return True
        if self.is_empty:
            return False
        slack = self.tol if slack is None else slack
        j = np.searchsorted(self.lo, other.lo + slack, side="right") - 1
        if np.any(j < 0):
            return False
        return bool(np.all((self.lo[j] <= other.lo + slack) & (other.hi <= self.hi[j] + slack)))

    def contains_point(self, x):
        j = np.searchsorted(self.lo, x, side="right") - 1
        return bool(j >= 0 and x <= self.hi[j])


def _merge(lo, hi, tol):
    if lo.size == 0:
        return np.empty(0), np.empty(0)
    order = np.argsort(lo, kind="stable")
    lo, hi = lo[order], hi[order]
    reach = np.maximum.accumulate(hi)
    starts = np.ones(lo.size, dtype=bool)
    starts[1:] = lo[1:] > reach[:-1] + tol
    idx = np.flatnonzero(starts)
    ends = np.append(idx[1:], lo.size) - 1
    return lo[idx].copy(), reach[ends].copy()
