"""Allocations of a cooperative game: Shapley values, proportional values, PME.

The Shapley value is computed from the Möbius (Harsanyi dividend) transform;
:func:`shapley_permutation` is the equivalent random-order form. The
proportional value weights each ordering ``pi`` by
``L(pi) = 1 / prod_j v(C_j(pi))``; summing over orderings is done with a
recursion over subsets,

    R(S) = (1 / v(S)) * sum_{i in S} R(S - i),          R({}) = 1
    G(T) = sum_{j not in T} G(T + j) / v(T + j),         G(D)  = 1

so that the total weight of orderings that place ``S`` first (in any order)
and then ``i`` is ``R(S) G(S + i) / v(S + i)``. Everything is accumulated in
log space.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from .coalitions import members, popcounts
from .errors import AllocationError, GameError
from .games import MAX_TABLE_PLAYERS, CooperativeGame, dual_game

logger = logging.getLogger(__name__)

MAX_EXHAUSTIVE = 10
EXACT_TAU = 1e-9
ESTIMATED_TAU = 1e-4


@dataclass(frozen=True, eq=False)
class Allocation:
    method: str
    shares: np.ndarray
    normalized: bool = False
    names: tuple[str, ...] | None = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        shares = np.array(self.shares, dtype=float)
        shares.setflags(write=False)
        object.__setattr__(self, "shares", shares)

    @property
    def d(self) -> int:
        return len(self.shares)

    @property
    def total(self) -> float:
        return float(self.shares.sum())

    def as_dict(self) -> dict:
        names = self.names or tuple(f"X{i + 1}" for i in range(self.d))
        return dict(zip(names, self.shares.tolist()))


def _check_table(g: CooperativeGame, limit: int = MAX_TABLE_PLAYERS):
    if g.d > limit:
        raise GameError(f"this operation supports d <= {limit}, got {g.d}")


def moebius_transform(g: CooperativeGame) -> np.ndarray:
    """Dividends ``S_A = sum_{B <= A} (-1)^{|A|-|B|} v(B)`` for every ``A``."""
    _check_table(g)
    s = g.values.copy()
    masks = np.arange(1 << g.d)
    for i in range(g.d):
        sel = masks[(masks >> i) & 1 == 1]
        s[sel] -= s[sel ^ (1 << i)]
    return s


def _warn_negative(alloc: Allocation) -> Allocation:
    neg = [i for i, v in enumerate(alloc.shares) if v < 0]
    if neg:
        names = alloc.names or tuple(f"X{i + 1}" for i in range(alloc.d))
        logger.warning("%s: negative share(s) for %s", alloc.method, [names[i] for i in neg])
        return replace(alloc, diagnostics=dict(alloc.diagnostics, negative=[names[i] for i in neg]))
    return alloc


def shapley_from_game(g: CooperativeGame) -> Allocation:
    """Shapley values ``Sh_i = sum_{A containing i} S_A / |A|``."""
    s = moebius_transform(g)
    sizes = popcounts(g.d)
    share = np.zeros(g.d)
    per_member = np.zeros_like(s)
    per_member[1:] = s[1:] / sizes[1:]
    masks = np.arange(1 << g.d)
    for i in range(g.d):
        share[i] = per_member[(masks >> i) & 1 == 1].sum()
    alloc = Allocation("shapley", share, names=g.names,
                       diagnostics={"raw_sum": float(share.sum()), "grand_value": g.grand_value})
    return _warn_negative(alloc)


def _contributions(values: np.ndarray, perms: np.ndarray) -> np.ndarray:
    """Marginal contribution of each player in each ordering, shape ``(m, d)``.

    Column ``i`` refers to player ``i`` (not to position ``i``).
    """
    bits = np.left_shift(1, perms.astype(np.int64))
    prefix = np.cumsum(bits, axis=1)
    gain = values[prefix] - values[prefix - bits]
    out = np.empty_like(gain)
    np.put_along_axis(out, perms.astype(np.int64), gain, axis=1)
    return out


def shapley_permutation(g: CooperativeGame, sampler: str = "exhaustive", n_perm: int = 10_000,
                        seed: int = 0, chunk: int = 100_000) -> Allocation:
    """Shapley values as the average marginal contribution over orderings.

    ``sampler="exhaustive"`` enumerates all ``d!`` orderings (``d <= 10``);
    ``sampler="monte-carlo"`` averages ``n_perm`` uniformly random orderings and
    reports per-player standard errors in ``diagnostics["stderr"]``.
    """
    _check_table(g)
    d = g.d
    if sampler == "exhaustive":
        if d > MAX_EXHAUSTIVE:
            raise AllocationError(f"exhaustive enumeration supports d <= {MAX_EXHAUSTIVE}, got {d}")
        total = np.zeros(d)
        count = 0
        it = itertools.permutations(range(d))
        while True:
            block = np.array(list(itertools.islice(it, chunk)), dtype=np.int64)
            if block.size == 0:
                break
            total += _contributions(g.values, block.reshape(-1, d)).sum(axis=0)
            count += len(block)
        share = total / count
        diag = {"orderings": count}
    elif sampler == "monte-carlo":
        if n_perm < 2:
            raise AllocationError("monte-carlo sampling needs at least 2 orderings")
        rng = np.random.default_rng(seed)
        perms = rng.permuted(np.tile(np.arange(d), (n_perm, 1)), axis=1)
        contrib = _contributions(g.values, perms)
        share = contrib.mean(axis=0)
        diag = {"orderings": n_perm, "stderr": (contrib.std(axis=0, ddof=1) / math.sqrt(n_perm)).tolist()}
    else:
        raise AllocationError(f"unknown sampler {sampler!r}")
    diag["raw_sum"] = float(share.sum())
    return _warn_negative(Allocation("shapley", share, names=g.names, diagnostics=diag))


def _layers(d: int):
    sizes = popcounts(d)
    order = np.argsort(sizes, kind="stable")
    bounds = np.searchsorted(sizes[order], np.arange(d + 2))
    return [order[bounds[c]:bounds[c + 1]] for c in range(d + 1)]


def proportional_values_random_order(g: CooperativeGame, floor: float | None = None) -> Allocation:
    """Proportional values of ``g``.

    Every non-empty coalition must have a positive value. With ``floor``,
    values below it are raised to ``floor`` in the ordering weights only;
    marginal contributions always use the raw values.
    """
    _check_table(g)
    d = g.d
    v = g.values
    nonempty = v[1:]
    if np.all(np.abs(nonempty) == 0.0):
        raise AllocationError("null game: every coalition is worth zero")
    weights_v = v.copy()
    clamped = []
    if floor is not None:
        low = np.flatnonzero(weights_v[1:] < floor) + 1
        weights_v[low] = floor
        clamped = low.tolist()
    if np.any(weights_v[1:] <= 0):
        bad = (np.flatnonzero(weights_v[1:] <= 0) + 1).tolist()
        raise AllocationError(f"proportional values need positive coalition values; non-positive at {bad[:8]}")
    logv = np.zeros(1 << d)
    logv[1:] = np.log(weights_v[1:])
    layers = _layers(d)

    log_r = np.full(1 << d, -np.inf)
    log_r[0] = 0.0
    for c in range(1, d + 1):
        masks = layers[c]
        terms = np.full((len(masks), d), -np.inf)
        for i in range(d):
            has = (masks >> i) & 1 == 1
            terms[has, i] = log_r[masks[has] ^ (1 << i)]
        log_r[masks] = logsumexp(terms, axis=1) - logv[masks]

    full = (1 << d) - 1
    log_g = np.full(1 << d, -np.inf)
    log_g[full] = 0.0
    for c in range(d - 1, -1, -1):
        masks = layers[c]
        terms = np.full((len(masks), d), -np.inf)
        for j in range(d):
            free = (masks >> j) & 1 == 0
            up = masks[free] | (1 << j)
            terms[free, j] = log_g[up] - logv[up]
        log_g[masks] = logsumexp(terms, axis=1)

    log_z = log_r[full]
    share = np.zeros(d)
    all_masks = np.arange(1 << d)
    for i in range(d):
        s = all_masks[(all_masks >> i) & 1 == 0]
        up = s | (1 << i)
        weight = np.exp(log_r[s] + log_g[up] - logv[up] - log_z)
        share[i] = float(weight @ (v[up] - v[s]))
    diag = {"raw_sum": float(share.sum()), "log_total_weight": float(log_z), "clamped": clamped}
    return Allocation("proportional", share, names=g.names, diagnostics=diag)


def zero_coalition(w: CooperativeGame, tau: float) -> int:
    """Largest coalition ``Z`` with ``w(Z) <= tau`` (0 when there is none).

    Every coalition at or below ``tau`` must lie inside ``Z``; two such
    coalitions whose union is worth more than ``tau`` make ``Z`` ambiguous.
    """
    low = np.flatnonzero(w.values[1:] <= tau) + 1
    if len(low) == 0:
        return 0
    union = int(np.bitwise_or.reduce(low))
    if w.values[union] > tau:
        sizes = popcounts(w.d)[low]
        order = low[np.argsort(-sizes, kind="stable")]
        maximal = [int(a) for a in order if not any((int(a) | int(b)) == int(b) and a != b for b in low)]
        raise AllocationError(
            "ambiguous zero coalition: maximal coalitions "
            f"{[members(m) for m in maximal]} are each worth <= {tau} but their union is worth "
            f"{w.values[union]:.6g}"
        )
    return union


def pme_from_game(g: CooperativeGame, tau: float | None = None) -> Allocation:
    """Proportional marginal effects: proportional values of the dual game.

    Inputs of the largest zero-worth coalition ``Z`` of the dual get exactly
    zero. The others share ``w(D)`` as the proportional values of the game
    ``u(B) = w(B + Z)`` on ``D - Z``, which is the limit of the proportional
    value when the worth of ``Z`` tends to zero.
    """
    _check_table(g)
    if tau is None:
        tau = ESTIMATED_TAU if g.meta.get("source") == "knn" else EXACT_TAU
    if tau < 0:
        raise AllocationError("tau must be non-negative")
    w = dual_game(g)
    full = (1 << g.d) - 1
    if w.values[full] <= tau:
        raise AllocationError("null game: the grand coalition is worth zero")
    zero = zero_coalition(w, tau)
    share = np.zeros(g.d)
    rest = full & ~zero
    sub = w.restrict(rest, base=zero) if zero else w
    pv = proportional_values_random_order(sub, floor=tau)
    share[members(rest)] = pv.shares
    names = g.names
    diag = {
        "raw_sum": float(share.sum()),
        "grand_value": float(w.values[full]),
        "tau": tau,
        "zero_set": [names[i] if names else i for i in members(zero)],
        "clamped": pv.diagnostics["clamped"],
    }
    return Allocation("pme", share, names=names, diagnostics=diag)


def renormalize(a: Allocation) -> Allocation:
    """Divide shares by their sum; the raw sum is kept in the diagnostics."""
    raw = float(a.shares.sum())
    if not raw > 0:
        raise AllocationError(f"pathological estimate: shares sum to {raw:.6g}")
    return replace(a, shares=a.shares / raw, normalized=True,
                   diagnostics=dict(a.diagnostics, raw_sum=raw))
