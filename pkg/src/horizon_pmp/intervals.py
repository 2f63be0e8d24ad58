"""Exact unions of half-open intervals [a, b) with rational endpoints."""

from __future__ import annotations

import bisect
from fractions import Fraction
from typing import Iterable, Sequence

from .errors import InvalidInputError, UnsupportedInputError

_INF = float("inf")


def as_fraction(v) -> Fraction:
    """Exact rational value of an int, Fraction, decimal string or float."""
    if isinstance(v, Fraction):
        return v
    if isinstance(v, bool):
        raise InvalidInputError("booleans are not interval endpoints")
    try:
        return Fraction(v)
    except (TypeError, ValueError) as exc:
        raise InvalidInputError(f"cannot convert {v!r} to a rational") from exc


class IntervalUnion:
    """Sorted, disjoint, non-adjacent union of half-open intervals."""

    __slots__ = ("_parts",)

    def __init__(self, parts: Iterable[Sequence] = ()):
        items = []
        for a, b in parts:
            a, b = as_fraction(a), as_fraction(b)
            if b < a:
                raise InvalidInputError(f"interval [{a}, {b}) has negative length")
            if b > a:
                items.append((a, b))
        items.sort()
        merged = []
        for a, b in items:
            if merged and a <= merged[-1][1]:
                merged[-1] = (merged[-1][0], max(merged[-1][1], b))
            else:
                merged.append((a, b))
        self._parts = tuple(merged)

    @property
    def parts(self) -> tuple:
        return self._parts

    def __iter__(self):
        return iter(self._parts)

    def __len__(self):
        return len(self._parts)

    def __eq__(self, other):
        return isinstance(other, IntervalUnion) and self._parts == other._parts

    def __hash__(self):
        return hash(self._parts)

    def __repr__(self):
        inner = ", ".join(f"[{a}, {b})" for a, b in self._parts)
        return f"IntervalUnion({inner})"

    def is_empty(self) -> bool:
        return not self._parts

    def measure(self) -> Fraction:
        return sum((b - a for a, b in self._parts), Fraction(0))

    @property
    def inf(self):
        return self._parts[0][0] if self._parts else None

    @property
    def sup(self):
        return self._parts[-1][1] if self._parts else None

    def endpoints(self) -> list:
        return [e for ab in self._parts for e in ab]

    def contains(self, t) -> bool:
        k = bisect.bisect_right(self._parts, (t, _INF)) - 1
        return k >= 0 and self._parts[k][0] <= t < self._parts[k][1]

    def union(self, other: "IntervalUnion") -> "IntervalUnion":
        return IntervalUnion(self._parts + other._parts)

    def intersection(self, other: "IntervalUnion") -> "IntervalUnion":
        out, i, j = [], 0, 0
        A, B = self._parts, other._parts
        while i < len(A) and j < len(B):
            lo = max(A[i][0], B[j][0])
            hi = min(A[i][1], B[j][1])
            if lo < hi:
                out.append((lo, hi))
            if A[i][1] < B[j][1]:
                i += 1
            else:
                j += 1
        return IntervalUnion(out)

    def difference(self, other: "IntervalUnion") -> "IntervalUnion":
        out, j = [], 0
        B = other._parts
        for a, b in self._parts:
            cur = a
            while j < len(B) and B[j][1] <= cur:
                j += 1
            k = j
            while k < len(B) and B[k][0] < b:
                c, d = B[k]
                if c > cur:
                    out.append((cur, c))
                cur = max(cur, d)
                if cur >= b:
                    break
                k += 1
            if cur < b:
                out.append((cur, b))
        return IntervalUnion(out)

    def issubset(self, other: "IntervalUnion") -> bool:
        return self.difference(other).is_empty()

    def isdisjoint(self, other: "IntervalUnion") -> bool:
        return self.intersection(other).is_empty()

    def clip(self, t) -> "IntervalUnion":
        """Intersection with [0, t)."""
        t = as_fraction(t)
        return IntervalUnion([(a, min(b, t)) for a, b in self._parts if a < t])

    def measure_up_to(self, t) -> Fraction:
        return self.clip(t).measure()

    def point_at_measure(self, m) -> Fraction:
        """Smallest t with |[0, t) intersected with self| = m."""
        m = as_fraction(m)
        if m < 0 or m > self.measure():
            raise InvalidInputError("requested measure outside [0, |K|]")
        acc = Fraction(0)
        for a, b in self._parts:
            if acc + (b - a) >= m:
                return a + (m - acc)
            acc += b - a
        return self._parts[-1][1] if self._parts else Fraction(0)

    def leading(self, m) -> "IntervalUnion":
        """The initial portion of self with measure m."""
        if m == 0:
            return IntervalUnion()
        return self.clip(self.point_at_measure(m)) if m < self.measure() else self

    def to_list(self) -> list:
        return [[str(a), str(b)] for a, b in self._parts]

    def to_float_list(self) -> list:
        return [[float(a), float(b)] for a, b in self._parts]


class StepFunction:
    """Vector-valued step function: value ``v_k`` on [a_k, b_k).

    The pieces must be pairwise disjoint; their union is the support K.
    """

    def __init__(self, pieces: Iterable[Sequence]):
        parts = []
        for piece in pieces:
            if len(piece) != 3:
                raise UnsupportedInputError("step functions are given as (a, b, value) triples")
            a, b, v = piece
            vec = tuple(as_fraction(c) for c in (v if isinstance(v, (list, tuple)) else [v]))
            parts.append((as_fraction(a), as_fraction(b), vec))
        parts.sort(key=lambda p: p[0])
        for (a1, b1, _), (a2, _, _) in zip(parts, parts[1:]):
            if a2 < b1:
                raise InvalidInputError("step function pieces overlap")
        dims = {len(v) for _, _, v in parts}
        if len(dims) > 1:
            raise InvalidInputError("step function values have mixed dimensions")
        self.pieces = tuple((a, b, v) for a, b, v in parts if b > a)
        self.dim = dims.pop() if dims else 0

    @property
    def support(self) -> IntervalUnion:
        return IntervalUnion((a, b) for a, b, _ in self.pieces)

    def value(self, t):
        for a, b, v in self.pieces:
            if a <= t < b:
                return v
        return tuple(Fraction(0) for _ in range(self.dim))

    def breakpoints(self) -> list:
        return sorted({e for a, b, _ in self.pieces for e in (a, b)})

    def sup_norm_squared(self) -> Fraction:
        return max((sum(c * c for c in v) for _, _, v in self.pieces), default=Fraction(0))


def step_approximation(fn, a, b, pieces: int) -> StepFunction:
    """Midpoint step function of ``fn`` on [a, b) with equal pieces (values rounded to float)."""
    a, b = as_fraction(a), as_fraction(b)
    if pieces < 1:
        raise InvalidInputError("need at least one piece")
    h = (b - a) / pieces
    out = []
    for k in range(pieces):
        lo, hi = a + k * h, a + (k + 1) * h
        v = fn(float((lo + hi) / 2))
        vals = [float(c) for c in (v if hasattr(v, "__len__") else [v])]
        out.append((lo, hi, vals))
    return StepFunction(out)
