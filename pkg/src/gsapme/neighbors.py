"""Exact and (1+eps)-approximate k-nearest-neighbour search.

The tree is :class:`scipy.spatial.cKDTree`, whose ``eps`` argument implements
the approximate search of Arya et al.: every returned neighbour lies within
``(1 + eps)`` times the distance of the true k-th neighbour. On top of it this
module fixes a deterministic ordering: neighbours are sorted by distance and
equal distances are broken by the lower row index.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .dataset import EncodedMatrix
from .errors import NeighborError

# Relative slack under which two squared distances count as tied when we
# decide whether the tree could have cut a tie at the k-th neighbour.
_TIE_RTOL = 1e-9


def _tie_sorted(cand, d2):
    """Sort by distance, treating distances within the tie tolerance as equal
    and ordering those by row index."""
    order = np.lexsort((cand, d2))
    cand, d2 = cand[order], d2[order]
    if len(d2) > 1:
        gap = np.diff(d2) > _TIE_RTOL * d2[1:] + 1e-300
        group = np.concatenate([[0], np.cumsum(gap)])
        order = np.lexsort((cand, group))
        cand, d2 = cand[order], d2[order]
    return cand, d2


@dataclass(frozen=True, eq=False)
class NeighborIndex:
    points: np.ndarray
    eps: float
    tree: cKDTree

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def candidates(self, queries: np.ndarray, k: int):
        """Raw ``(distances, indices)`` of the ``k`` tree neighbours, always 2-D."""
        queries = self._as_queries(queries)
        k = min(k, self.n)
        dist, idx = self.tree.query(queries, k=k, eps=self.eps)
        if k == 1:
            dist, idx = dist[:, None], idx[:, None]
        return dist, idx

    def within(self, query: np.ndarray, radius: float) -> np.ndarray:
        """Indices of all points at distance ``<= radius`` of ``query``."""
        query = self._as_queries(query)[0]
        return np.asarray(self.tree.query_ball_point(query, radius, eps=0.0), dtype=np.int64)

    def within_many(self, queries: np.ndarray, radii) -> list[np.ndarray]:
        """Per query, indices of the points within its own radius."""
        queries = self._as_queries(queries)
        hits = self.tree.query_ball_point(queries, np.asarray(radii, dtype=float), eps=0.0)
        return [np.asarray(h, dtype=np.int64) for h in hits]

    def query(self, queries: np.ndarray, k: int, exclude=None) -> np.ndarray:
        """Row indices of the ``k`` nearest points of each query, shape ``(q, k)``.

        ``exclude`` optionally gives, per query, one row index to leave out
        (``-1`` for none), which is how self-matches are dropped.
        """
        queries = self._as_queries(queries)
        nq = queries.shape[0]
        if exclude is None:
            exclude = np.full(nq, -1, dtype=np.int64)
        else:
            exclude = np.asarray(exclude, dtype=np.int64).reshape(nq)
        available = self.n - (1 if np.any(exclude >= 0) else 0)
        if not 1 <= k <= available:
            raise NeighborError(f"k must be in 1..{available}, got {k}")

        extra = 1 if self.eps == 0.0 else 0
        n_cand = min(self.n, k + extra + (1 if np.any(exclude >= 0) else 0))
        _, cand = self.candidates(queries, n_cand)
        out = np.empty((nq, k), dtype=np.int64)
        for row in range(nq):
            out[row] = self._resolve(queries[row], cand[row], k, exclude[row])
        return out

    def _resolve(self, q, cand, k, skip):
        cand = cand[cand != skip]
        d2 = self._sqdist(q, cand)
        cand, d2 = _tie_sorted(cand, d2)
        if self.eps > 0.0 or len(cand) + (skip >= 0) >= self.n:
            return cand[:k]
        boundary = d2[k - 1]
        if d2[-1] > boundary * (1 + _TIE_RTOL) + 1e-300:
            return cand[:k]
        # the tree may have cut a tie at the k-th distance: gather all of it
        radius = np.sqrt(boundary) * (1 + _TIE_RTOL) + 1e-150
        cand = self.within(q, radius)
        cand = cand[cand != skip]
        d2 = self._sqdist(q, cand)
        return _tie_sorted(cand, d2)[0][:k]

    def _sqdist(self, q, cand):
        diff = self.points[cand] - q
        return np.einsum("ij,ij->i", diff, diff)

    def _as_queries(self, queries):
        q = np.asarray(queries, dtype=float)
        dim = self.points.shape[1]
        if q.ndim == 0 or (q.ndim == 1 and dim != 1 and q.size == dim):
            q = q.reshape(1, -1)
        elif q.ndim == 1:
            q = q.reshape(-1, dim)
        if q.shape[1] != dim:
            raise NeighborError(f"query dimension {q.shape[1]} does not match index dimension {dim}")
        return q


def build_index(space, eps: float = 0.0) -> NeighborIndex:
    """Build a search tree over the rows of ``space``.

    ``space`` is an :class:`EncodedMatrix` or an ``(n, m)`` array. A space with
    no columns is treated as ``n`` coincident points.
    """
    if eps < 0 or not np.isfinite(eps):
        raise NeighborError(f"eps must be a non-negative real, got {eps}")
    values = space.values if isinstance(space, EncodedMatrix) else np.asarray(space, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    if values.ndim != 2 or values.shape[0] == 0:
        raise NeighborError("cannot index an empty point set")
    if values.shape[1] == 0:
        values = np.zeros((values.shape[0], 1))
    points = np.ascontiguousarray(values, dtype=float)
    points.setflags(write=False)
    return NeighborIndex(points=points, eps=float(eps), tree=cKDTree(points))


def knn_query(idx: NeighborIndex, q, k: int, exclude_self: bool = False, self_row: int | None = None) -> np.ndarray:
    """Indices of the ``k`` nearest indexed points of the single point ``q``.

    With ``exclude_self`` the row ``self_row`` (default: any point coinciding
    with ``q`` of lowest index) is left out of the result.
    """
    q = np.asarray(q, dtype=float).reshape(1, -1)
    skip = -1
    if exclude_self:
        if self_row is None:
            dist, cand = idx.candidates(q, 1)
            hits = idx.within(q[0], 0.0) if dist[0, 0] == 0.0 else np.empty(0, dtype=np.int64)
            if hits.size == 0:
                raise NeighborError("exclude_self requires the query to be an indexed point")
            skip = int(hits.min())
        else:
            skip = int(self_row)
    return idx.query(q, k, exclude=[skip])[0]
