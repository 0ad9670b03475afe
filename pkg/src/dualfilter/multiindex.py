"""Multi-indices in Z_+^K under the product order.

A multi-index is a plain tuple of non-negative ints. Sets of multi-indices
are held by :class:`IndexSet`, which keeps its elements deduplicated and in
lexicographic order so that everything built on top of it iterates
reproducibly.
"""
from __future__ import annotations

import itertools
import math
import numbers
from typing import Iterable, Iterator, Sequence, Tuple

MultiIndex = Tuple[int, ...]


def as_multiindex(m: Sequence[int] | int) -> MultiIndex:
    """Validate ``m`` and return it as a tuple of non-negative ints."""
    if isinstance(m, numbers.Integral):
        m = (m,)
    out = tuple(int(v) for v in m)
    if any(v != w for v, w in zip(out, m)):
        raise ValueError(f"multi-index entries must be integers, got {tuple(m)}")
    if any(v < 0 for v in out):
        raise ValueError(f"multi-index entries must be non-negative, got {out}")
    return out


def magnitude(m: MultiIndex) -> int:
    return sum(m)


def zero(dim: int) -> MultiIndex:
    return (0,) * dim


def _check_dims(m: MultiIndex, n: MultiIndex) -> None:
    if len(m) != len(n):
        raise ValueError(f"dimension mismatch: {len(m)} vs {len(n)}")


def leq(m: MultiIndex, n: MultiIndex) -> bool:
    """Product order: ``m <= n`` iff every coordinate of ``m`` is <= that of ``n``."""
    _check_dims(m, n)
    return all(a <= b for a, b in zip(m, n))


def add(m: MultiIndex, n: MultiIndex) -> MultiIndex:
    _check_dims(m, n)
    return tuple(a + b for a, b in zip(m, n))


def sub(m: MultiIndex, n: MultiIndex) -> MultiIndex:
    """Coordinate-wise ``m - n``; requires ``n <= m``."""
    if not leq(n, m):
        raise ValueError(f"{n} is not below {m} in the product order")
    return tuple(a - b for a, b in zip(m, n))


class IndexSet:
    """Finite set of multi-indices of a common dimension, lexicographically ordered.

    Instances are immutable; equality compares the element tuples.
    """

    __slots__ = ("_elements", "_members", "dim")

    def __init__(self, elements: Iterable[Sequence[int]], dim: int | None = None):
        elems = sorted({as_multiindex(e) for e in elements})
        dims = {len(e) for e in elems}
        if len(dims) > 1:
            raise ValueError(f"mixed dimensions in index set: {sorted(dims)}")
        if dims:
            (d,) = dims
            if dim is not None and dim != d:
                raise ValueError(f"expected dimension {dim}, got {d}")
            dim = d
        self._elements: tuple[MultiIndex, ...] = tuple(elems)
        self._members = frozenset(elems)
        self.dim = dim

    @property
    def elements(self) -> tuple[MultiIndex, ...]:
        return self._elements

    def __iter__(self) -> Iterator[MultiIndex]:
        return iter(self._elements)

    def __len__(self) -> int:
        return len(self._elements)

    def __contains__(self, m: object) -> bool:
        return m in self._members

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, IndexSet):
            return NotImplemented
        return self._elements == other._elements

    def __hash__(self) -> int:
        return hash(self._elements)

    def __le__(self, other: IndexSet) -> bool:
        return self._members <= other._members

    def __repr__(self) -> str:
        return f"IndexSet({list(self._elements)})"


def _box(m: MultiIndex) -> Iterator[MultiIndex]:
    return itertools.product(*(range(v + 1) for v in m))


def lower_set(lam: IndexSet | Iterable[Sequence[int]]) -> IndexSet:
    """All multi-indices dominated by some element of ``lam``."""
    if not isinstance(lam, IndexSet):
        lam = IndexSet(lam)
    if len(lam) == 0:
        raise ValueError("lower set of an empty index set is undefined")
    # only maximal elements contribute new points
    maximal = [m for m in lam if not any(m != n and leq(m, n) for n in lam)]
    out: set[MultiIndex] = set()
    for m in maximal:
        out.update(_box(m))
    return IndexSet(out, dim=lam.dim)


def translate(lam: IndexSet, m: Sequence[int]) -> IndexSet:
    """The set ``{n + m : n in lam}``."""
    m = as_multiindex(m)
    if lam.dim is not None and lam.dim != len(m):
        raise ValueError(f"dimension mismatch: {lam.dim} vs {len(m)}")
    return IndexSet((add(n, m) for n in lam), dim=len(m))


def singleton_lower_size(m: Sequence[int]) -> int:
    """Number of points below ``m``: the product of ``m_i + 1``."""
    return math.prod(v + 1 for v in as_multiindex(m))
