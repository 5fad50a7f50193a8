"""Cooperative games over input coalitions.

A game on ``d`` players is stored as a dense table ``values[mask]`` over all
``2**d`` bitmask coalitions (see :mod:`gsapme.coalitions`). For sensitivity
analysis the value of a coalition ``A`` is the normalised explained variance
``V(E(Y | X_A)) / V(Y)`` and its dual is the total Sobol' index of ``A``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .coalitions import MAX_PLAYERS, check_players, grand, members
from .errors import DegenerateOutputError, GameError

MAX_TABLE_PLAYERS = 20
MAX_ATOMS = 10**6


@dataclass(frozen=True, eq=False)
class CooperativeGame:
    d: int
    values: np.ndarray
    normalized: bool = True
    names: tuple[str, ...] | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        check_players(self.d)
        if self.d > MAX_TABLE_PLAYERS:
            raise GameError(f"dense game tables are limited to d <= {MAX_TABLE_PLAYERS}")
        values = np.array(self.values, dtype=float)
        if values.shape != (1 << self.d,):
            raise GameError(f"game table must have 2**{self.d} entries, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise GameError("game values must be finite")
        if values[0] != 0.0:
            raise GameError(f"v(empty set) must be 0, got {values[0]}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.names is not None:
            if len(self.names) != self.d:
                raise GameError("one name per player is required")
            object.__setattr__(self, "names", tuple(self.names))

    @classmethod
    def from_dict(cls, d: int, table: dict, **kw) -> "CooperativeGame":
        """Build from ``{mask: value}``; missing coalitions are an error."""
        values = np.zeros(1 << d)
        seen = set()
        for mask, value in table.items():
            values[int(mask)] = value
            seen.add(int(mask))
        missing = set(range(1, 1 << d)) - seen
        if missing:
            raise GameError(f"game table is missing {len(missing)} coalition(s)")
        return cls(d, values, **kw)

    def __call__(self, mask: int) -> float:
        return float(self.values[mask])

    @property
    def grand_value(self) -> float:
        return float(self.values[-1])

    def monotonicity_violations(self, tol: float = 0.0) -> np.ndarray:
        """Pairs ``(B, A)`` with ``A = B + {i}`` and ``v(B) - v(A) > tol``."""
        out = []
        v = self.values
        for i in range(self.d):
            bit = 1 << i
            b = np.arange(1 << self.d)
            b = b[(b & bit) == 0]
            bad = v[b] - v[b | bit] > tol
            out.extend(zip(b[bad].tolist(), (b[bad] | bit).tolist()))
        return np.asarray(sorted(out), dtype=np.int64).reshape(-1, 2)

    def is_monotone(self, tol: float = 0.0) -> bool:
        return len(self.monotonicity_violations(tol)) == 0

    def restrict(self, keep: int, base: int = 0) -> "CooperativeGame":
        """Game on the players of ``keep`` with ``u(B) = v(B | base)`` for ``B`` non-empty.

        Players are renumbered in increasing order of their original index.
        """
        players = members(keep)
        if not players:
            raise GameError("cannot restrict a game to no players")
        if keep & base:
            raise GameError("restriction base must be disjoint from the kept players")
        m = len(players)
        sub = np.arange(1 << m)
        full = np.zeros(1 << m, dtype=np.int64)
        for j, p in enumerate(players):
            full |= ((sub >> j) & 1) << p
        values = self.values[full | base].copy()
        values[0] = 0.0
        names = tuple(self.names[p] for p in players) if self.names else None
        return CooperativeGame(m, values, self.normalized, names)


def dual_game(g: CooperativeGame) -> CooperativeGame:
    """``w(A) = v(D) - v(D \\ A)``."""
    full = grand(g.d)
    masks = np.arange(1 << g.d)
    values = g.values[-1] - g.values[full & ~masks]
    values[0] = 0.0
    return CooperativeGame(g.d, values, g.normalized, g.names, dict(g.meta, dual=not g.meta.get("dual", False)))


def exact_game_discrete(model) -> CooperativeGame:
    """Exact explained-variance game of a finite discrete model.

    ``model`` provides ``atoms`` (``(N, d)`` support points), ``probs`` and
    ``outputs`` (the deterministic output at each atom). ``E(Y | X_A)`` is
    evaluated by grouping atoms that agree on the coordinates in ``A``.
    """
    atoms = np.asarray(model.atoms)
    probs = np.asarray(model.probs, dtype=float)
    y = np.asarray(model.outputs, dtype=float)
    if atoms.ndim != 2:
        raise GameError("atoms must be a 2-D array")
    n_atoms, d = atoms.shape
    if n_atoms > MAX_ATOMS:
        raise GameError(f"support too large: {n_atoms} atoms > {MAX_ATOMS}")
    if d > min(MAX_TABLE_PLAYERS, MAX_PLAYERS):
        raise GameError(f"too many inputs for a dense game: {d}")
    mean = probs @ y
    total = probs @ (y - mean) ** 2
    if total <= 1e-15 * max(1.0, mean * mean):
        raise DegenerateOutputError("degenerate output: zero variance under the model")
    # integer codes per coordinate so that coalitions can be grouped quickly
    codes = np.empty((n_atoms, d), dtype=np.int64)
    levels = np.empty(d, dtype=np.int64)
    for j in range(d):
        _, codes[:, j] = np.unique(atoms[:, j], return_inverse=True)
        levels[j] = codes[:, j].max() + 1
    values = np.zeros(1 << d)
    for mask in range(1, 1 << d):
        key = np.zeros(n_atoms, dtype=np.int64)
        for j in range(d):
            if mask >> j & 1:
                key = key * levels[j] + codes[:, j]
        _, group = np.unique(key, return_inverse=True)
        mass = np.bincount(group, weights=probs)
        cond = np.bincount(group, weights=probs * y)
        nz = mass > 0
        cond_mean = np.where(nz, cond / np.where(nz, mass, 1.0), 0.0)
        values[mask] = float(mass @ (cond_mean - mean) ** 2) / total
    names = tuple(model.names) if getattr(model, "names", None) is not None else None
    return CooperativeGame(d, values, True, names, {"source": "exact-discrete"})


def random_monotone_game(d: int, rng: np.random.Generator, normalize: bool = True,
                         positive: bool = True, kind: str = "dividends") -> CooperativeGame:
    """Random monotone game.

    ``kind="dividends"`` sums non-negative Möbius dividends, which gives a
    totally monotone game. ``kind="increments"`` walks up the lattice, setting
    each coalition to the largest value among its maximal proper subsets plus
    a random non-negative increment; such games are monotone but usually have
    negative dividends. With ``positive`` every non-empty coalition is worth
    strictly more than zero.
    """
    check_players(d)
    masks = np.arange(1 << d)
    if kind == "dividends":
        dividends = rng.exponential(size=1 << d) * (rng.random(1 << d) < 0.7)
        dividends[0] = 0.0
        if positive:
            for i in range(d):
                dividends[1 << i] += 0.05 + rng.random()
        values = dividends.copy()
        for i in range(d):
            sel = masks[(masks & (1 << i)) != 0]
            values[sel] += values[sel ^ (1 << i)]
    elif kind == "increments":
        values = np.zeros(1 << d)
        for mask in sorted(range(1, 1 << d), key=lambda m: m.bit_count()):
            below = max(values[mask & ~(1 << i)] for i in range(d) if mask >> i & 1)
            step = rng.exponential() * (rng.random() < 0.6)
            if positive and mask.bit_count() == 1:
                step += 0.05 + rng.random()
            values[mask] = below + step
    else:
        raise GameError(f"unknown kind {kind!r}")
    if normalize:
        values = values / values[-1]
    values[0] = 0.0
    return CooperativeGame(d, values)
