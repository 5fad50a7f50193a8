import numpy as np
import pytest

import gsapme.estimation as E
from gsapme.coalitions import grand, members
from gsapme.dataset import CATEGORICAL, DISCRETE, NUMERIC, ColumnSpec, Dataset, encode
from gsapme.errors import DegenerateOutputError, NeighborError
from gsapme.games import CooperativeGame
from gsapme.estimation import (KnnVarianceEstimator, estimate_game, monotonicity_audit, singleton_totals,
                               total_sobol_knn)
from gsapme.models.benchmarks import ishigami_sample, ishigami_total_indices, linear_gaussian_sample
from gsapme.models.dose import ncict_sample, synth_dose_tables


def mixed_dataset(n=240, seed=0):
    rng = np.random.default_rng(seed)
    g = rng.choice(["a", "b", "c"], size=n)
    k = rng.integers(0, 4, size=n)
    x = np.round(rng.normal(size=n), 1)
    y = x + k * (g == "a") + 0.3 * rng.normal(size=n)
    specs = [ColumnSpec("g", CATEGORICAL), ColumnSpec("k", DISCRETE), ColumnSpec("x", NUMERIC),
             ColumnSpec("y", output=True)]
    return Dataset.from_columns(specs, {"g": g, "k": k, "x": x, "y": y})


def naive_conditional_variance(ds, given, k, rows=None, ties="include"):
    """Direct transcription of the estimator on the coalition's own encoding."""
    x = encode(ds, members(given)).values
    y = ds.y
    rows = np.arange(ds.n) if rows is None else rows
    out = []
    for i in rows:
        d2 = ((x - x[i]) ** 2).sum(axis=1)
        if ties == "include":
            b = np.sort(d2)[k - 1]
            hood = np.flatnonzero(d2 <= b * (1 + 1e-7) + 1e-12)
        else:
            d2r = np.array([float(f"{v:.12g}") for v in d2])
            d2r[i] = -1.0
            hood = np.lexsort((np.arange(ds.n), d2r))[:k]
        out.append(np.var(y[hood], ddof=1))
    return float(np.mean(out))


@pytest.mark.parametrize("k", [3, 10])
def test_matches_naive_tie_inclusive(k):
    ds = mixed_dataset()
    est = KnnVarianceEstimator(ds, k)
    for given in range(1, grand(ds.d)):
        assert est.conditional_variance(given) == pytest.approx(naive_conditional_variance(ds, given, k), rel=1e-10)


def test_index_convention_matches_naive():
    ds = mixed_dataset(120, 2)
    est = KnnVarianceEstimator(ds, 5, ties="index")
    for given in range(1, grand(ds.d)):
        assert est.conditional_variance(given) == pytest.approx(
            naive_conditional_variance(ds, given, 5, ties="index"), rel=1e-10)


def test_all_search_paths_agree(monkeypatch):
    ds = mixed_dataset(400, 5)
    rows = None
    ref = {}
    for label, patch in [("dense", {}), ("brute", {"_DENSE_PAIRS": 0}),
                         ("tree", {"_DENSE_PAIRS": 0, "_BRUTE_PAIRS": 0})]:
        for name, value in patch.items():
            monkeypatch.setattr(E, name, value)
        est = KnnVarianceEstimator(ds, 7, n_query=150, seed=4)
        rows = est.query_rows
        ref[label] = est.all_conditional_variances()[1:-1]
    np.testing.assert_allclose(ref["dense"], ref["brute"], rtol=1e-10)
    np.testing.assert_allclose(ref["dense"], ref["tree"], rtol=1e-10)
    naive = [naive_conditional_variance(ds, g, 7, rows) for g in range(1, grand(ds.d))]
    np.testing.assert_allclose(ref["dense"], naive, rtol=1e-10)


def test_grand_coalition_total_is_one():
    ds = mixed_dataset(50)
    assert total_sobol_knn(ds, grand(ds.d), k=3) == 1.0
    assert total_sobol_knn(ds, 0, k=3) == 0.0


def test_exogenous_input_has_zero_total_index():
    rng = np.random.default_rng(0)
    n = 10_000
    x1, x2 = rng.normal(size=n), rng.normal(size=n)
    ds = Dataset.from_columns([ColumnSpec("x1"), ColumnSpec("x2"), ColumnSpec("y", output=True)],
                              {"x1": x1, "x2": x2, "y": x1})
    assert abs(total_sobol_knn(ds, [1], k=3)) < 0.05
    game = estimate_game(ds, k=3)
    np.testing.assert_allclose(game.values, [0, 1, 0, 1], atol=0.05)


def test_one_input_game_is_pinned():
    ds = Dataset.from_columns([ColumnSpec("x"), ColumnSpec("y", output=True)],
                              {"x": [1.0, 2.0, 3.0, 4.0], "y": [1.0, 0.0, 2.0, 5.0]})
    game = estimate_game(ds, k=2)
    assert game.values.tolist() == [0.0, 1.0]


def test_ishigami_totals():
    ds = ishigami_sample(2**13, seed=1)
    est = KnnVarianceEstimator(ds, 3)
    got = [est.total_index(1 << i) for i in range(3)]
    np.testing.assert_allclose(got, ishigami_total_indices(), atol=0.05)


def test_estimate_game_is_deterministic_and_records_meta():
    ds = mixed_dataset(300)
    a, b = estimate_game(ds, k=4), estimate_game(ds, k=4)
    assert np.array_equal(a.values, b.values)
    assert a.meta["source"] == "knn" and a.meta["k"] == 4 and a.meta["n_query"] == 300
    c = estimate_game(ds, k=4, n_query=100, seed=3)
    assert c.meta["n_query"] == 100
    assert np.array_equal(c.values, estimate_game(ds, k=4, n_query=100, seed=3).values)


def test_explicit_query_rows():
    ds = mixed_dataset(300)
    rows = E.select_query_rows(ds.n, 100, 3)
    assert len(rows) == 100 and np.all(np.diff(rows) > 0)
    np.testing.assert_array_equal(E.select_query_rows(ds.n, None, 3), np.arange(300))
    a = estimate_game(ds, k=4, n_query=100, seed=3)
    b = estimate_game(ds, k=4, query_rows=rows[::-1], seed=99)
    assert np.array_equal(a.values, b.values)
    for bad in ([], [-1, 2], [300]):
        with pytest.raises(ValueError):
            KnnVarianceEstimator(ds, 4, query_rows=bad)


def test_estimate_reports_both_indices():
    ds = linear_gaussian_sample(2000, [1.0, 0.5], np.eye(2), 0)
    est = KnnVarianceEstimator(ds, 3)
    e = est.estimate(0b01)
    assert e.total_index == pytest.approx(0.8, abs=0.05)
    assert e.closed_index == pytest.approx(0.8, abs=0.05)


def test_argument_checks():
    ds = mixed_dataset(20)
    with pytest.raises(NeighborError):
        KnnVarianceEstimator(ds, 1)
    with pytest.raises(NeighborError):
        KnnVarianceEstimator(ds, 21)
    with pytest.raises(NeighborError):
        KnnVarianceEstimator(ds, 3, eps=-1)
    with pytest.raises(ValueError):
        KnnVarianceEstimator(ds, 3, ties="random")
    flat = Dataset.from_columns([ColumnSpec("x"), ColumnSpec("y", output=True)],
                                {"x": [1.0, 2.0, 3.0], "y": [2.0, 2.0, 2.0]})
    with pytest.raises(DegenerateOutputError):
        estimate_game(flat, k=2)


def test_singleton_totals_and_audit():
    ds = linear_gaussian_sample(3000, [1.0, 1.0, 0.0], np.eye(3), 2)
    game = estimate_game(ds, k=3)
    np.testing.assert_allclose(singleton_totals(game), [0.5, 0.5, 0.0], atol=0.06)
    audit = monotonicity_audit(game)
    assert audit["covering_pairs"] == 12
    assert audit["pairs"] == 19
    assert 0 <= audit["fraction"] <= 1


def test_ct_benchmark_monotonicity_audit():
    ds = ncict_sample(8848, "head", synth_dose_tables(0), 5)
    game = estimate_game(ds, k=100, n_query=300)
    audit = monotonicity_audit(game, 0.02)
    print(f"violations {audit['violations']}/{audit['pairs']}, "
          f"covering {audit['covering_violations']}/{audit['covering_pairs']}")
    assert audit["fraction"] < 0.10


def test_audit_counts_match_pair_enumeration():
    rng = np.random.default_rng(4)
    values = np.concatenate([[0.0], rng.uniform(0, 1, 15)])
    game = CooperativeGame(4, values, False)
    comparable = [(b, a) for a in range(16) for b in range(16) if b != a and b & a == b]
    covering = [(b, a) for b, a in comparable if bin(a ^ b).count("1") == 1]
    audit = monotonicity_audit(game, 0.1)
    assert audit["pairs"] == len(comparable) == 65
    assert audit["violations"] == sum(values[b] - values[a] > 0.1 for b, a in comparable)
    assert audit["covering_violations"] == sum(values[b] - values[a] > 0.1 for b, a in covering)
