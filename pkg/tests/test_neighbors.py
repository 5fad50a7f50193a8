import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gsapme.errors import NeighborError
from gsapme.neighbors import build_index, knn_query


def brute(points, q, k, skip=-1):
    # distances equal to 12 significant digits count as tied
    d2 = ((points - q) ** 2).sum(axis=1)
    d2 = np.array([float(f"{v:.12g}") for v in d2])
    idx = np.arange(len(points))
    keep = idx != skip
    order = np.lexsort((idx[keep], d2[keep]))
    return idx[keep][order][:k]


def test_single_point():
    idx = build_index(np.array([[3.0, 4.0]]))
    assert knn_query(idx, [100.0, -5.0], 1).tolist() == [0]


def test_hand_examples():
    idx = build_index(np.array([[0.0], [10.0]]))
    assert knn_query(idx, [1.0], 1).tolist() == [0]
    idx = build_index(np.array([[0.0], [1.0], [2.0], [3.0]]))
    assert knn_query(idx, [1.6], 2).tolist() == [2, 1]


def test_errors():
    pts = np.zeros((4, 2))
    with pytest.raises(NeighborError):
        build_index(pts, eps=-0.1)
    with pytest.raises(NeighborError):
        build_index(np.zeros((0, 2)))
    idx = build_index(pts)
    with pytest.raises(NeighborError):
        knn_query(idx, [0.0, 0.0], 5)
    with pytest.raises(NeighborError):
        knn_query(idx, [0.0, 0.0], 4, exclude_self=True)


def test_ties_broken_by_lower_index():
    # eight points on a lattice: many equal distances
    pts = np.array([[x, y] for x in range(3) for y in range(3)], dtype=float)
    idx = build_index(pts)
    for q in pts:
        for k in range(1, 10):
            assert knn_query(idx, q, k).tolist() == brute(pts, q, k).tolist()


def test_exclude_self_drops_lowest_coincident_row():
    pts = np.array([[0.0], [0.0], [1.0], [0.0]])
    idx = build_index(pts)
    assert knn_query(idx, [0.0], 2, exclude_self=True).tolist() == [1, 3]
    assert knn_query(idx, [0.0], 2, exclude_self=True, self_row=3).tolist() == [0, 1]


def test_matches_brute_force_on_random_instances():
    rng = np.random.default_rng(7)
    for trial in range(20):
        n, m = rng.integers(5, 400), rng.integers(1, 5)
        # rounding creates exact ties
        pts = np.round(rng.normal(size=(n, m)), 1)
        idx = build_index(pts)
        k = int(rng.integers(1, min(n, 30)))
        got = idx.query(pts[:50], k)
        for r in range(min(50, n)):
            assert got[r].tolist() == brute(pts, pts[r], k).tolist()


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.05, 3.0))
def test_approximation_bound(seed, eps):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(300, 4))
    exact = build_index(pts)
    approx = build_index(pts, eps)
    queries = rng.normal(size=(20, 4))
    k = 7
    got = approx.query(queries, k)
    for q, row in zip(queries, got):
        kth = np.sqrt(((pts[brute(pts, q, k)[-1]] - q) ** 2).sum())
        dist = np.sqrt(((pts[row] - q) ** 2).sum(axis=1))
        assert np.all(dist <= (1 + eps) * kth + 1e-12)
    assert np.array_equal(exact.query(queries, k), np.array([brute(pts, q, k) for q in queries]))


def test_insertion_order_does_not_change_distances():
    rng = np.random.default_rng(3)
    pts = rng.normal(size=(200, 3))
    perm = rng.permutation(200)
    q = rng.normal(size=3)
    a = build_index(pts).query(q, 10)[0]
    b = build_index(pts[perm]).query(q, 10)[0]
    da = np.sort(((pts[a] - q) ** 2).sum(axis=1))
    db = np.sort(((pts[perm][b] - q) ** 2).sum(axis=1))
    np.testing.assert_allclose(da, db)


def test_zero_column_space_is_coincident_points():
    idx = build_index(np.zeros((5, 0)))
    assert idx.query(np.zeros(1), 3)[0].tolist() == [0, 1, 2]


def test_build_is_deterministic():
    pts = np.random.default_rng(0).normal(size=(5000, 3))
    q = pts[:100]
    assert np.array_equal(build_index(pts).query(q, 5), build_index(pts).query(q, 5))
