"""Integer partitions, coloured (multi)partitions and the counting table p(m, d)."""

from __future__ import annotations

from collections import Counter
from functools import lru_cache
from math import factorial


def partitions(m: int, max_part: int | None = None):
    """Yield partitions of ``m`` as nonincreasing tuples, in reverse lexicographic order."""
    if max_part is None:
        max_part = m
    if m == 0:
        yield ()
        return
    for first in range(min(m, max_part), 0, -1):
        for rest in partitions(m - first, first):
            yield (first,) + rest


@lru_cache(maxsize=None)
def partition_list(m: int) -> tuple:
    return tuple(partitions(m))


def z_factor(lam) -> int:
    """``prod_n n^{m_n} m_n!`` for the multiplicities ``m_n`` of ``lam``."""
    out = 1
    for n, mult in Counter(lam).items():
        out *= n**mult * factorial(mult)
    return out


def coloured_partitions(m: int, colours: int, bound=None):
    """Yield multisets of ``(part, colour)`` pairs with parts summing to ``m``.

    Each multiset is a tuple sorted in descending order; ``bound`` caps the
    first entry and is used internally for the recursion.
    """
    if m == 0:
        yield ()
        return
    if bound is None:
        bound = (m, colours - 1)
    top_part, top_col = bound
    for part in range(min(m, top_part), 0, -1):
        max_col = top_col if part == top_part else colours - 1
        for col in range(max_col, -1, -1):
            for rest in coloured_partitions(m - part, colours, (part, col)):
                yield ((part, col),) + rest


def sigma1(j: int) -> int:
    return sum(d for d in range(1, j + 1) if j % d == 0)


def multipartition_column(m_max: int, d: int) -> list[int]:
    """``p(m, d)`` for ``m = 0..m_max`` from ``m p(m) = d sum_j sigma(j) p(m - j)``."""
    sig = [0] + [sigma1(j) for j in range(1, m_max + 1)]
    p = [1] + [0] * m_max
    for m in range(1, m_max + 1):
        acc = sum(sig[j] * p[m - j] for j in range(1, m + 1))
        p[m] = d * acc // m
    return p


def partition_count(m: int) -> int:
    return multipartition_column(m, 1)[m]
