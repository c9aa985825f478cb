"""Multiplicity-vector partitions and Faa di Bruno coefficients.

A partition of m is encoded as multiplicities (k_1, ..., k_m) with
sum_i i*k_i = m; the associated coefficient m! / prod_j (k_j! * (j!)**k_j)
counts the set partitions with k_j blocks of size j, which is exactly the
weight appearing in the higher-derivative chain rule.
"""

from __future__ import annotations

from functools import lru_cache
from math import factorial

__all__ = ["multiplicity_partitions", "faa_di_bruno_coefficient"]


@lru_cache(maxsize=None)
def multiplicity_partitions(m: int) -> tuple[tuple[int, ...], ...]:
    """All multiplicity vectors (k_1..k_m) with sum_i i*k_i = m.

    For m = 0 the single empty vector () is returned, matching the empty
    product convention.
    """
    if m < 0:
        raise ValueError("m must be >= 0")
    if m == 0:
        return ((),)

    out: list[tuple[int, ...]] = []

    def fill(remaining: int, part: int, ks: list[int]):
        if part > remaining:
            if remaining == 0:
                padded = ks + [0] * (m - len(ks))
                out.append(tuple(padded))
            return
        # choose the multiplicity of block size `part`
        for k in range(remaining // part + 1):
            fill(remaining - k * part, part + 1, ks + [k])

    fill(m, 1, [])
    return tuple(out)


def faa_di_bruno_coefficient(m: int, ks: tuple[int, ...]) -> int:
    """m! / prod_j (k_j! * (j!)**k_j) for a multiplicity vector of m."""
    denom = 1
    for j, k in enumerate(ks, start=1):
        denom *= factorial(k) * factorial(j) ** k
    return factorial(m) // denom
