"""Brute-force reference allocations for small games.

These walk every ordering literally, with frozensets instead of bitmasks and
(for proportional values) 50-digit decimal or exact rational arithmetic, and
share no code with :mod:`gsapme.allocations`. They are meant for tests.
"""
from __future__ import annotations

import itertools
import math
from decimal import Context, Decimal, localcontext
from fractions import Fraction

from .allocations import Allocation
from .errors import AllocationError


def _table(g):
    table = {}
    for mask in range(1 << g.d):
        key = frozenset(i for i in range(g.d) if mask >> i & 1)
        table[key] = float(g.values[mask])
    return table


def shapley_bruteforce(g) -> Allocation:
    if g.d > 8:
        raise AllocationError("shapley_bruteforce is limited to d <= 8")
    v = _table(g)
    totals = [0.0] * g.d
    for order in itertools.permutations(range(g.d)):
        before = frozenset()
        for player in order:
            after = before | {player}
            totals[player] += v[after] - v[before]
            before = after
    n = math.factorial(g.d)
    return Allocation("shapley", [t / n for t in totals], names=g.names)


def proportional_bruteforce(g, exact: bool = False) -> Allocation:
    """Weighted enumeration of all orderings in linear space.

    Arithmetic runs at 50 significant digits, or on exact fractions with
    ``exact=True`` (much slower at ``d = 6``).
    """
    if g.d > 6:
        raise AllocationError("proportional_bruteforce is limited to d <= 6")
    with localcontext(Context(prec=50)):
        num = Fraction if exact else Decimal
        v = {k: num(x) for k, x in _table(g).items()}
        weights = {}
        for order in itertools.permutations(range(g.d)):
            prod = num(1)
            prefix = frozenset()
            for player in order:
                prefix = prefix | {player}
                if v[prefix] <= 0:
                    raise AllocationError(f"zero or negative prefix value at {sorted(prefix)}")
                prod *= v[prefix]
            weights[order] = 1 / prod
        z = sum(weights.values())
        shares = [num(0)] * g.d
        for order, weight in weights.items():
            before = frozenset()
            for player in order:
                after = before | {player}
                shares[player] += weight * (v[after] - v[before])
                before = after
        return Allocation("proportional", [float(s / z) for s in shares], names=g.names)
