"""Finite unions of closed intervals on a circle ``[0, period)``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class IntervalSet:
    """Disjoint, sorted intervals ``[starts[k], ends[k]]`` with ``0 <= start < end``.

    An interval that wraps through ``0`` is stored with ``end > period``; at most
    one such interval exists and it is always the last one.
    """

    starts: np.ndarray
    ends: np.ndarray
    period: float

    @classmethod
    def empty(cls, period: float) -> "IntervalSet":
        return cls(np.zeros(0), np.zeros(0), float(period))

    @classmethod
    def full(cls, period: float) -> "IntervalSet":
        return cls(np.array([0.0]), np.array([float(period)]), float(period))

    @classmethod
    def from_pairs(cls, starts, ends, period: float, min_length: float = 0.0) -> "IntervalSet":
        """Union of possibly overlapping intervals; ``end < start`` means wrap-around."""
        P = float(period)
        s = np.asarray(starts, dtype=float).ravel()
        e = np.asarray(ends, dtype=float).ravel()
        if s.size == 0:
            return cls.empty(P)
        length = np.where(e >= s, e - s, e + P - s)
        if np.any(length >= P):
            return cls.full(P)
        s = np.mod(s, P)
        e = s + np.mod(length, P)
        # unroll wrap-around intervals into two pieces on [0, P]
        wrap = e > P
        s2 = np.concatenate([s, np.zeros(int(wrap.sum()))])
        e2 = np.concatenate([np.minimum(e, P), e[wrap] - P])
        order = np.argsort(s2, kind="stable")
        s2, e2 = s2[order], e2[order]
        out_s, out_e = [s2[0]], [e2[0]]
        for a, b in zip(s2[1:], e2[1:]):
            if a <= out_e[-1]:
                out_e[-1] = max(out_e[-1], b)
            else:
                out_s.append(a)
                out_e.append(b)
        out_s = np.array(out_s)
        out_e = np.array(out_e)
        # merge the piece touching P with the piece touching 0
        if out_s.size > 1 and out_s[0] <= 0.0 and out_e[-1] >= P:
            out_e[-1] = P + out_e[0]
            out_s, out_e = out_s[1:], out_e[1:]
        elif out_s.size == 1 and out_s[0] <= 0.0 and out_e[0] >= P:
            return cls.full(P)
        keep = (out_e - out_s) > min_length
        return cls(out_s[keep], out_e[keep], P)

    def __len__(self) -> int:
        return int(self.starts.size)

    def __iter__(self):
        return iter(zip(self.starts.tolist(), self.ends.tolist()))

    @property
    def lengths(self) -> np.ndarray:
        return self.ends - self.starts

    def measure(self) -> float:
        return float(np.sum(self.lengths))

    def is_full(self) -> bool:
        return self.measure() >= self.period * (1 - 1e-15)

    def complement(self, min_length: float = 0.0) -> "IntervalSet":
        P = self.period
        if len(self) == 0:
            return IntervalSet.full(P)
        if self.is_full():
            return IntervalSet.empty(P)
        gap_s = self.ends
        gap_e = np.append(self.starts[1:], self.starts[0] + P)
        return IntervalSet.from_pairs(gap_s, gap_e, P, min_length=min_length)

    def union(self, other: "IntervalSet") -> "IntervalSet":
        return IntervalSet.from_pairs(np.concatenate([self.starts, other.starts]),
                                      np.concatenate([self.ends, other.ends]), self.period)

    def intersection(self, other: "IntervalSet") -> "IntervalSet":
        return self.complement().union(other.complement()).complement()

    def difference(self, other: "IntervalSet") -> "IntervalSet":
        return self.intersection(other.complement())

    def contains(self, x) -> np.ndarray:
        x = np.mod(np.asarray(x, dtype=float), self.period)
        out = np.zeros(x.shape, dtype=bool)
        for a, b in self:
            out |= (x >= a) & (x <= b)
            if b > self.period:
                out |= x <= b - self.period
        return out

    def pieces(self) -> list[tuple[float, float]]:
        """Intervals as ``(start, end)`` pairs with ``end`` possibly beyond the period."""
        return list(self)

