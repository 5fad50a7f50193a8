import numpy as np
import pytest

from gsapme.dataset import NUMERIC, ColumnSpec, Dataset, subsample_rows
from gsapme.errors import ConfigError, DegenerateOutputError
from gsapme.models.benchmarks import linear_gaussian_sample
from gsapme.resampling import (COVID_PLAN, CT_PLAN, BootstrapPlan, allocate, bias_correct,
                               bootstrap_allocations, percentile_ci)
from gsapme.estimation import estimate_game, select_query_rows

DS = linear_gaussian_sample(600, [1.0, 0.5, 0.0], np.eye(3), 1)


def test_bias_correct_examples():
    assert bias_correct([0.30], [0.27])[0] == pytest.approx(0.33)
    assert bias_correct([0.10], [0.14])[0] == pytest.approx(0.06)
    np.testing.assert_array_equal(bias_correct([0.2, 0.8], [0.2, 0.8]), [0.2, 0.8])
    with pytest.raises(ValueError):
        bias_correct([0.1, 0.2], [0.1])


def test_percentile_ci_examples():
    assert percentile_ci(np.arange(1, 101), 0.05, 0.95) == (5.0, 95.0)
    assert percentile_ci(np.arange(100, 0, -1), 0.025, 0.975) == (3.0, 98.0)
    assert percentile_ci([0.4] * 7, 0.05, 0.95) == (0.4, 0.4)
    assert percentile_ci([3.0, 1.0], 0.05, 0.95) == (1.0, 3.0)
    with pytest.raises(ValueError):
        percentile_ci([], 0.05, 0.95)
    with pytest.raises(ValueError):
        percentile_ci([1.0, 2.0], 0.9, 0.1)


def test_plan_validation_and_protocols():
    assert (COVID_PLAN.repetitions, COVID_PLAN.fraction, COVID_PLAN.quantiles) == (100, 0.8, (0.025, 0.975))
    assert (CT_PLAN.repetitions, CT_PLAN.fraction, CT_PLAN.quantiles, CT_PLAN.bias_correct) == (200, 0.9, (0.05, 0.95), True)
    for bad in (dict(quantiles=(0.5, 0.5)), dict(quantiles=(0.0, 0.9)), dict(repetitions=1),
                dict(fraction=0.0), dict(fraction=1.2)):
        with pytest.raises(ConfigError):
            BootstrapPlan(**bad)


def test_full_fraction_gives_zero_width_intervals():
    plan = BootstrapPlan(repetitions=5, fraction=1.0, seed=3)
    out = bootstrap_allocations(DS, ["shapley", "pme"], plan, k=3)
    for rep in out.values():
        assert np.all(rep.repetitions == rep.repetitions[0])
        np.testing.assert_array_equal(rep.ci_low, rep.ci_high)
        np.testing.assert_array_equal(rep.estimate, rep.full_estimate)


def test_bootstrap_report_shape_and_reproducibility():
    plan = BootstrapPlan(repetitions=6, fraction=0.8, quantiles=(0.1, 0.9), seed=5)
    a = bootstrap_allocations(DS, ("shapley", "pme", "total-sobol"), plan, k=3)
    b = bootstrap_allocations(DS, ("shapley", "pme", "total-sobol"), plan, k=3)
    for m in a:
        assert a[m].repetitions.shape == (6, 3)
        assert np.all(a[m].ci_low <= a[m].ci_high)
        assert np.array_equal(a[m].repetitions, b[m].repetitions)
        assert np.array_equal(a[m].estimate, b[m].estimate)
        assert [r["name"] for r in a[m].rows()] == ["X1", "X2", "X3"]
    full = estimate_game(DS, 3, seed=5)
    np.testing.assert_array_equal(a["shapley"].full_estimate, allocate(full, "shapley").shares)


def test_repetitions_reuse_full_sample_query_rows():
    plan = BootstrapPlan(repetitions=3, fraction=0.8, seed=4)
    out = bootstrap_allocations(DS, "shapley", plan, k=3, n_query=150)["shapley"]
    base = select_query_rows(DS.n, 150, 4)
    np.testing.assert_array_equal(out.full_estimate, allocate(estimate_game(DS, 3, n_query=150, seed=4), "shapley").shares)
    for r in range(3):
        rows = subsample_rows(DS.n, 0.8, 4 ^ r)
        kept = np.searchsorted(rows, base[np.isin(base, rows)])
        game = estimate_game(DS.take(rows), 3, query_rows=kept)
        np.testing.assert_array_equal(out.repetitions[r], allocate(game, "shapley").shares)


def test_parallel_repetitions_match_serial():
    plan = BootstrapPlan(repetitions=4, fraction=0.7, seed=2)
    serial = bootstrap_allocations(DS, "shapley", plan, k=3)["shapley"]
    parallel = bootstrap_allocations(DS, "shapley", plan, k=3, n_jobs=2)["shapley"]
    assert np.array_equal(serial.repetitions, parallel.repetitions)


def test_bias_correction_keeps_normalised_sums():
    plan = BootstrapPlan(repetitions=6, fraction=0.8, bias_correct=True, seed=1)
    rep = bootstrap_allocations(DS, "shapley", plan, k=3, renormalize_shares=True)["shapley"]
    assert rep.estimate.sum() == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(rep.estimate, 2 * rep.full_estimate - rep.repetition_mean)
    assert rep.diagnostics["uncorrected"] == rep.full_estimate.tolist()


def test_shifted_interval_basis():
    plan = BootstrapPlan(repetitions=6, fraction=0.8, seed=1)
    raw = bootstrap_allocations(DS, "pme", plan, k=3)["pme"]
    shifted = bootstrap_allocations(DS, "pme", plan, k=3, ci_basis="shifted")["pme"]
    shift = raw.full_estimate - raw.repetition_mean
    np.testing.assert_allclose(shifted.ci_low, raw.ci_low + shift, atol=1e-15)
    with pytest.raises(ConfigError):
        bootstrap_allocations(DS, "pme", plan, ci_basis="bca")


def test_bootstrap_errors():
    plan = BootstrapPlan(repetitions=3, fraction=0.5)
    with pytest.raises(ConfigError):
        bootstrap_allocations(DS, "sobol", plan)
    # a dataset whose output is constant on most rows: some subsample ends up flat
    y = np.zeros(40)
    y[0] = 1.0
    specs = [ColumnSpec("x", NUMERIC), ColumnSpec("y", NUMERIC, output=True)]
    ds = Dataset.from_columns(specs, {"x": np.arange(40.0), "y": y})
    with pytest.raises(DegenerateOutputError, match="bootstrap repetition"):
        bootstrap_allocations(ds, "shapley", BootstrapPlan(repetitions=20, fraction=0.5), k=3)
