"""Bitmask representation of coalitions of inputs.

Input ``i`` (0-based) is a member of coalition ``A`` iff bit ``i`` of ``A`` is
set, so the coalitions of ``d`` inputs are exactly the integers
``0 .. 2**d - 1`` and the grand coalition is ``2**d - 1``.
"""
from __future__ import annotations

from collections.abc import Iterable

import numpy as np

MAX_PLAYERS = 30


def check_players(d: int) -> None:
    if not 1 <= d <= MAX_PLAYERS:
        raise ValueError(f"number of inputs must be in 1..{MAX_PLAYERS}, got {d}")


def coalition(members: Iterable[int] | int) -> int:
    """Build a bitmask from an iterable of 0-based indices (ints pass through)."""
    if isinstance(members, (int, np.integer)):
        if members < 0:
            raise ValueError("coalition bitmask must be non-negative")
        return int(members)
    mask = 0
    for i in members:
        if i < 0:
            raise ValueError(f"negative input index {i}")
        mask |= 1 << int(i)
    return mask


def members(mask: int) -> list[int]:
    """Sorted member indices of ``mask``."""
    out = []
    i = 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return out


def grand(d: int) -> int:
    return (1 << d) - 1


def complement(mask: int, d: int) -> int:
    return grand(d) & ~mask


def size(mask: int) -> int:
    return int(mask).bit_count()


def popcounts(d: int) -> np.ndarray:
    """Cardinality of every coalition, indexed by bitmask."""
    counts = np.zeros(1 << d, dtype=np.int64)
    for i in range(d):
        counts[1 << i : 1 << (i + 1)] = counts[: 1 << i] + 1
    return counts


def subsets(mask: int):
    """Yield every subset of ``mask`` (including 0 and ``mask``), descending."""
    sub = mask
    while True:
        yield sub
        if sub == 0:
            return
        sub = (sub - 1) & mask


def format_coalition(mask: int, names: list[str] | None = None) -> str:
    idx = members(mask)
    if names is None:
        return "{" + ",".join(str(i + 1) for i in idx) + "}"
    return "{" + ",".join(names[i] for i in idx) + "}"
