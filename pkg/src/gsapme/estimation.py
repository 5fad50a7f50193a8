"""Given-data estimation of the explained-variance game by nearest neighbours.

For a coalition ``A`` the expected conditional variance ``E[V(Y | X_A)]`` is
estimated by averaging, over query rows ``i``, the empirical variance (``n - 1``
convention) of ``Y`` over the k-neighbourhood of ``x_{A,i}`` in the encoded
space of ``A``. The query row itself belongs to its neighbourhood. Then

    total index  S^T_{-A} = E[V(Y | X_A)] / V(Y)
    game value   v(A)     = 1 - S^T_{-A}

Two neighbourhood conventions are available:

``ties="include"`` (default)
    the k closest rows plus every row tied with the k-th one. Coincident rows
    are merged into weighted atoms first, so discrete inputs with many
    repeated values are handled in time proportional to the number of
    distinct points.
``ties="index"``
    exactly ``k`` rows: the query row and its ``k - 1`` nearest other rows,
    equal distances broken by lower row index.

``eps > 0`` makes the tree searches (1+eps)-approximate. When only a few query
rows are used, all coalitions are evaluated from dense distance matrices
instead, and those results are exact whatever ``eps``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .coalitions import coalition, complement, grand, members
from .dataset import CATEGORICAL, Dataset, EncodedMatrix, encode, variance_total
from .errors import GameError, NeighborError
from .games import MAX_TABLE_PLAYERS, CooperativeGame
from .neighbors import build_index

logger = logging.getLogger(__name__)

TIES = ("include", "index")
_TIE_RTOL = 1e-9
_MAX_CELLS = 256
# below this many query-atom pairs distances are computed directly, not via a tree
_BRUTE_PAIRS = 2_000_000
_BRUTE_CHUNK = 1_000_000
# query-row times data-row budget for the shared dense walk over all coalitions
_DENSE_PAIRS = 4_000_000
# working-memory cap of that walk, in float64 entries
_DENSE_FLOATS = 8000000


def _combine(codes) -> np.ndarray:
    """Dense integer key identifying each distinct tuple of per-column codes."""
    key = np.zeros(len(codes[0]), dtype=np.int64)
    for c in codes:
        key = key * (int(c.max()) + 1) + c
        key = np.unique(key, return_inverse=True)[1].reshape(-1).astype(np.int64)
    return key


def _hood_sums(points, counts, s1, s2, queries, k, eps):
    """Neighbourhood totals for weighted atoms.

    For each query atom, the neighbourhood is the nearest atoms up to the one
    where the cumulative count reaches ``k``, plus all atoms tied with it.
    Returns the row count, sum and sum of squares over the neighbourhood and
    its radius.
    """
    n_atoms = len(points)
    if len(queries) * n_atoms <= _BRUTE_PAIRS:
        return _hood_sums_brute(points, counts, s1, s2, queries, k)
    index = build_index(points, eps)
    kk = min(k, n_atoms)
    dist, nb = index.candidates(index.points[queries], kk)
    cum = np.cumsum(counts[nb], axis=1)
    reached = cum >= k
    first = np.argmax(reached, axis=1)
    # a cell with fewer than k rows: the whole cell is the neighbourhood
    first[~reached[:, -1]] = kk - 1
    rows = np.arange(len(queries))
    boundary = dist[rows, first]
    limit = boundary * (1 + _TIE_RTOL) + 1e-300
    inside = dist <= limit[:, None]
    cnt = np.where(inside, counts[nb], 0).sum(axis=1).astype(float)
    t1 = np.where(inside, s1[nb], 0.0).sum(axis=1)
    t2 = np.where(inside, s2[nb], 0.0).sum(axis=1)
    if kk < n_atoms and eps == 0.0:
        # (approximate searches skip this: their neighbourhoods are approximate anyway)
        redo = np.flatnonzero(inside[:, -1])
        if len(redo):
            # the tie at the boundary may extend past the returned candidates
            hits = index.within_many(index.points[queries[redo]], limit[redo] * (1 + _TIE_RTOL) + 1e-150)
            lengths = np.array([len(h) for h in hits])
            flat = np.concatenate(hits)
            starts = np.concatenate([[0], np.cumsum(lengths)[:-1]])
            cnt[redo] = np.add.reduceat(counts[flat], starts)
            t1[redo] = np.add.reduceat(s1[flat], starts)
            t2[redo] = np.add.reduceat(s2[flat], starts)
    return cnt, t1, t2, boundary


def _hood_sums_brute(points, counts, s1, s2, queries, k):
    """Exact :func:`_hood_sums` from the dense query-to-atom distance matrix."""
    n_atoms = len(points)
    out = [np.empty(len(queries)) for _ in range(4)]
    sq = np.einsum("ij,ij->i", points, points)
    step = max(1, _BRUTE_CHUNK // n_atoms)
    kk = min(k, n_atoms)
    for lo in range(0, len(queries), step):
        q = queries[lo:lo + step]
        d2 = sq[q][:, None] + sq[None, :] - 2.0 * (points[q] @ points.T)
        np.maximum(d2, 0.0, out=d2)
        d2[np.arange(len(q)), q] = 0.0
        # the kk nearest atoms hold at least kk >= k rows (or all of them)
        near = np.argpartition(d2, kk - 1, axis=1)[:, :kk] if kk < n_atoms else np.broadcast_to(np.arange(n_atoms), d2.shape)
        nd = np.take_along_axis(d2, near, axis=1)
        order = np.argsort(nd, axis=1, kind="stable")
        nd = np.take_along_axis(nd, order, axis=1)
        cum = np.cumsum(counts[np.take_along_axis(near, order, axis=1)], axis=1)
        reached = cum >= k
        first = np.where(reached[:, -1], np.argmax(reached, axis=1), kk - 1)
        boundary = nd[np.arange(len(q)), first]
        # the dense expansion carries rounding of order 1e-15 |p|^2; ties are judged with slack above it
        slack = boundary * _TIE_RTOL + 1e-12 * (sq[q] + sq.max())
        inside = (d2 <= (boundary + slack)[:, None]).astype(float)
        out[0][lo:lo + step] = inside @ counts
        out[1][lo:lo + step] = inside @ s1
        out[2][lo:lo + step] = inside @ s2
        out[3][lo:lo + step] = np.sqrt(boundary)
    return tuple(out)


@dataclass(frozen=True)
class SobolEstimate:
    coalition: int
    total_index: float
    closed_index: float


def select_query_rows(n: int, n_query: int | None, seed: int) -> np.ndarray:
    """Rows over which local variances are averaged: all of them, or a seeded sample."""
    if n_query is None or n_query >= n:
        return np.arange(n)
    if n_query < 1:
        raise ValueError(f"n_query must be positive, got {n_query}")
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(n, size=int(n_query), replace=False))


class KnnVarianceEstimator:
    """Reusable state for estimating many coalitions on one dataset.

    The full encoding is computed once; the encoded columns of a coalition are
    a column selection of it, which is the same as encoding the coalition on
    its own because each column is standardised independently. Explicit
    ``query_rows`` take precedence over ``n_query`` and ``seed``.
    """

    def __init__(self, ds: Dataset, k: int = 3, eps: float = 0.0, n_query: int | None = None,
                 seed: int = 0, ties: str = "include", query_rows=None):
        if k < 2:
            raise NeighborError(f"k must be >= 2 to form a neighbourhood variance, got {k}")
        if k > ds.n:
            raise NeighborError(f"k = {k} exceeds the number of rows n = {ds.n}")
        if ties not in TIES:
            raise ValueError(f"ties must be one of {TIES}, got {ties!r}")
        if eps < 0:
            raise NeighborError(f"eps must be non-negative, got {eps}")
        self.ds = ds
        self.k = int(k)
        self.eps = float(eps)
        self.ties = ties
        self.var_y = variance_total(ds)
        self.y = np.asarray(ds.y, dtype=float) - float(np.mean(ds.y))
        self.space: EncodedMatrix = encode(ds, grand(ds.d))
        self.column_index = [np.flatnonzero(self.space.source == i) for i in range(ds.d)]
        self.codes = [np.unique(ds.columns[name], return_inverse=True)[1].reshape(-1).astype(np.int64)
                      for name in ds.input_names]
        self.distinct = [int(c.max()) + 1 == ds.n for c in self.codes]
        self._weights = np.column_stack([np.ones(ds.n), self.y, self.y * self.y])
        if query_rows is not None:
            self.query_rows = np.unique(np.asarray(query_rows, dtype=np.int64))
            if self.query_rows.size == 0 or self.query_rows[0] < 0 or self.query_rows[-1] >= ds.n:
                raise ValueError("query_rows must be a non-empty set of row indices")
        else:
            self.query_rows = select_query_rows(ds.n, n_query, seed)

    def conditional_variance(self, given: int) -> float:
        """Estimate of ``E[V(Y | X_given)]``; ``given = 0`` yields ``V(Y)``."""
        given = coalition(given)
        if given == 0:
            return self.var_y
        if self.ties == "include":
            local = self._local_variances_merged(given)
        else:
            local = self._local_variances_indexed(self._columns(members(given)))
        return float(np.mean(local))

    def all_conditional_variances(self) -> np.ndarray:
        """``E[V(Y | X_A)]`` for every coalition ``A`` except the grand one, indexed by mask.

        With few query rows the squared distances of every coalition are built
        by adding per-input blocks along a depth-first walk over the subsets,
        which shares the work between coalitions. Otherwise each coalition is
        searched on its own.
        """
        d = self.ds.d
        out = np.zeros(1 << d)
        out[0] = self.var_y
        full = grand(d)
        n, nq = self.ds.n, len(self.query_rows)
        if self.ties != "include" or nq * n > _DENSE_PAIRS:
            for mask in range(1, full):
                out[mask] = self.conditional_variance(mask)
            return out
        step = max(1, _DENSE_FLOATS // (n * (2 * d + 2)))
        for lo in range(0, nq, step):
            rows = self.query_rows[lo:lo + step]
            blocks = []
            for i in range(d):
                x = self.space.values[:, self.column_index[i]]
                blk = np.zeros((len(rows), n))
                for c in range(x.shape[1]):
                    blk += (x[rows, c][:, None] - x[None, :, c]) ** 2
                blocks.append(blk)
            partial = np.zeros(1 << d)
            # one distance buffer per depth of the walk, plus two scratch buffers
            bufs = np.empty((d + 2, len(rows), n))

            def walk(mask, depth, start):
                for i in range(start, d):
                    m = mask | (1 << i)
                    if m == full:
                        continue
                    if depth == 0:
                        cur = blocks[i]
                    else:
                        cur = bufs[depth]
                        np.add(bufs[depth - 1] if depth > 1 else blocks[mask.bit_length() - 1], blocks[i], out=cur)
                    partial[m] = self._dense_local(cur, bufs[d], bufs[d + 1])
                    walk(m, depth + 1, i + 1)

            walk(0, 0, 0)
            out[1:full] += partial[1:full] * len(rows)
        out[1:full] /= nq
        return out

    def _dense_local(self, d2: np.ndarray, scratch: np.ndarray, spare: np.ndarray) -> float:
        part = spare[:len(d2)]
        np.copyto(part, d2)
        part.partition(self.k - 1, axis=1)
        boundary = part[:, self.k - 1].copy()
        inside = scratch[:len(d2)]
        np.less_equal(d2, (boundary * (1 + 2 * _TIE_RTOL))[:, None], out=inside, casting="unsafe")
        cnt, t1, t2 = (inside @ self._weights).T
        local = (t2 - t1 * t1 / cnt) / (cnt - 1.0)
        return float(np.mean(np.maximum(local, 0.0)))

    def total_index(self, mask: int) -> float:
        """``S^T_A`` for ``A = mask``."""
        mask = coalition(mask)
        full = grand(self.ds.d)
        if mask & ~full:
            raise ValueError("coalition refers to inputs outside the dataset")
        if mask == full:
            return 1.0
        if mask == 0:
            return 0.0
        return self.conditional_variance(complement(mask, self.ds.d)) / self.var_y

    def _local_variances_merged(self, given: int) -> np.ndarray:
        inputs = members(given)
        cats = [i for i in inputs if self.ds.inputs[i].kind == CATEGORICAL]
        nums = [i for i in inputs if i not in cats]

        if any(self.distinct[i] for i in inputs):
            first = inverse = np.arange(self.ds.n)
            counts = np.ones(self.ds.n, dtype=np.int64)
        else:
            key = _combine([self.codes[i] for i in inputs])
            _, first, inverse, counts = np.unique(key, return_index=True, return_inverse=True, return_counts=True)
            inverse = inverse.reshape(-1)
        n_atoms = len(first)
        s1 = np.bincount(inverse, weights=self.y, minlength=n_atoms)
        s2 = np.bincount(inverse, weights=self.y * self.y, minlength=n_atoms)
        q_atoms, q_mult = np.unique(inverse[self.query_rows], return_counts=True)

        full_x = self._columns(inputs)[first]
        cnt = np.empty(len(q_atoms))
        t1 = np.empty(len(q_atoms))
        t2 = np.empty(len(q_atoms))
        pending = np.ones(len(q_atoms), dtype=bool)

        if cats and len(q_atoms) * n_atoms > _BRUTE_PAIRS:
            cell_key = _combine([self.codes[i][first] for i in cats])
            cells, cell_of = np.unique(cell_key, return_inverse=True)
            if 1 < len(cells) <= _MAX_CELLS:
                # rows of different categorical cells are at least sqrt(penalty) apart,
                # so a neighbourhood found inside the own cell is exact when its radius
                # stays below that separation
                rep = first[np.unique(cell_of, return_index=True)[1]]
                pen = np.zeros((len(cells), len(cells)))
                for i in cats:
                    e = self._columns([i])[rep]
                    pen += ((e[:, None, :] - e[None, :, :]) ** 2).sum(axis=2)
                np.fill_diagonal(pen, np.inf)
                separation = pen.min(axis=1)
                num_x = self._columns(nums)[first]
                q_cell = cell_of[q_atoms]
                cell_rows = np.bincount(cell_of, weights=counts)
                for c in np.unique(q_cell):
                    if cell_rows[c] < self.k:
                        continue
                    in_cell = np.flatnonzero(cell_of == c)
                    sel = np.flatnonzero(q_cell == c)
                    local = np.full(n_atoms, -1, dtype=np.int64)
                    local[in_cell] = np.arange(len(in_cell))
                    res = _hood_sums(num_x[in_cell], counts[in_cell], s1[in_cell], s2[in_cell],
                                     local[q_atoms[sel]], self.k, self.eps)
                    ok = res[3] ** 2 < separation[c] * (1 - 1e-9)
                    done = sel[ok]
                    cnt[done], t1[done], t2[done] = res[0][ok], res[1][ok], res[2][ok]
                    pending[done] = False

        if pending.any():
            sel = np.flatnonzero(pending)
            res = _hood_sums(full_x, counts, s1, s2, q_atoms[sel], self.k, self.eps)
            cnt[sel], t1[sel], t2[sel] = res[0], res[1], res[2]
        local = (t2 - t1 * t1 / cnt) / (cnt - 1.0)
        return np.repeat(np.maximum(local, 0.0), q_mult)

    def _columns(self, inputs) -> np.ndarray:
        if not inputs:
            return np.zeros((self.ds.n, 1))
        cols = np.concatenate([self.column_index[i] for i in inputs])
        if len(cols) == 0:
            return np.zeros((self.ds.n, 1))
        return self.space.values[:, cols]

    def _local_variances_indexed(self, x: np.ndarray) -> np.ndarray:
        index = build_index(x, self.eps)
        rows = self.query_rows
        others = index.query(index.points[rows], self.k - 1, exclude=rows)
        hood = np.concatenate([rows[:, None], others], axis=1)
        return np.var(self.y[hood], axis=1, ddof=1)

    def estimate(self, mask: int) -> SobolEstimate:
        total = self.total_index(mask)
        closed = 1.0 - self.total_index(complement(coalition(mask), self.ds.d))
        return SobolEstimate(coalition(mask), total, closed)


def total_sobol_knn(ds: Dataset, A, k: int = 3, eps: float = 0.0, **kw) -> float:
    """Nearest-neighbour estimate of the total Sobol' index of coalition ``A``.

    ``A = D`` returns exactly 1 without any neighbour search. Keyword
    arguments (``n_query``, ``seed``, ``ties``) go to
    :class:`KnnVarianceEstimator`.
    """
    return KnnVarianceEstimator(ds, k, eps, **kw).total_index(coalition(A))


def estimate_game(ds: Dataset, k: int = 3, eps: float = 0.0, **kw) -> CooperativeGame:
    """Estimate ``v(A) = 1 - S^T_{-A}`` for every coalition.

    ``v(empty) = 0`` and ``v(D) = 1`` are fixed; the other ``2**d - 2``
    entries each cost one pass of neighbour queries. Values are not clipped.
    """
    d = ds.d
    if d > MAX_TABLE_PLAYERS:
        raise GameError(f"estimate_game supports d <= {MAX_TABLE_PLAYERS}, got {d}")
    est = KnnVarianceEstimator(ds, k, eps, **kw)
    values = 1.0 - est.all_conditional_variances() / est.var_y
    values[0] = 0.0
    values[-1] = 1.0
    meta = {
        "source": "knn",
        "k": est.k,
        "eps": est.eps,
        "n": ds.n,
        "n_query": int(len(est.query_rows)),
        "ties": est.ties,
    }
    game = CooperativeGame(d, values, True, tuple(ds.input_names), meta)
    violations = game.monotonicity_violations(0.02)
    if len(violations):
        logger.info("estimated game has %d monotonicity violation(s) above 0.02", len(violations))
    return game


def singleton_totals(game: CooperativeGame) -> np.ndarray:
    """First-player total indices ``S^T_{i} = v(D) - v(D \\ {i})`` of a variance game."""
    full = grand(game.d)
    return np.array([game.values[-1] - game.values[full & ~(1 << i)] for i in range(game.d)])


def monotonicity_audit(game: CooperativeGame, tol: float = 0.02) -> dict:
    """Count the pairs ``B < A`` with ``v(B) - v(A) > tol``.

    ``fraction`` is taken over all comparable pairs (``B`` a proper subset of
    ``A``, ``3**d - 2**d`` of them); ``covering_fraction`` over the covering
    pairs alone, where ``A`` has exactly one extra member. Small estimated
    drops concentrate on covering pairs, so the second share is the larger.
    """
    d = game.d
    v = game.values
    covering = d * (1 << (d - 1))
    bad = game.monotonicity_violations(tol)
    comparable = 3 ** d - 2 ** d
    violations = 0
    for a in range(1, 1 << d):
        sub = _submasks(a)
        violations += int(np.count_nonzero(v[sub[:-1]] - v[a] > tol))
    return {
        "pairs": comparable,
        "violations": violations,
        "fraction": violations / comparable,
        "covering_pairs": covering,
        "covering_violations": int(len(bad)),
        "covering_fraction": len(bad) / covering,
        "worst": [[members(int(b)), members(int(a))] for b, a in bad[:10]],
    }


def _submasks(a: int) -> np.ndarray:
    """All submasks of ``a`` in increasing order; the last one is ``a``."""
    bits = members(a)
    ranks = np.arange(1 << len(bits))
    out = np.zeros_like(ranks)
    for j, i in enumerate(bits):
        out |= ((ranks >> j) & 1) << i
    return out
