"""Subsampling bootstrap for estimated allocations.

Each repetition draws a fraction of the rows without replacement (an
m-out-of-n bootstrap), re-estimates the game and recomputes the allocations.
Intervals are nearest-rank quantiles of the repetition shares; the optional
bias correction ``2 * full - mean(repetitions)`` is applied to the point
estimate.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .allocations import Allocation, pme_from_game, renormalize, shapley_from_game
from .dataset import Dataset, subsample_rows
from .errors import ConfigError, GSAError
from .estimation import estimate_game, select_query_rows, singleton_totals

logger = logging.getLogger(__name__)

METHODS = ("shapley", "pme", "total-sobol")
CI_BASES = ("raw", "shifted")


@dataclass(frozen=True)
class BootstrapPlan:
    repetitions: int = 200
    fraction: float = 0.9
    quantiles: tuple = (0.05, 0.95)
    bias_correct: bool = False
    seed: int = 0

    def __post_init__(self):
        low, high = self.quantiles
        if not 0 < low < high < 1:
            raise ConfigError(f"quantiles must satisfy 0 < low < high < 1, got {self.quantiles}")
        if self.repetitions < 2:
            raise ConfigError("a bootstrap needs at least 2 repetitions")
        if not 0 < self.fraction <= 1:
            raise ConfigError(f"subsample fraction must lie in (0, 1], got {self.fraction}")


COVID_PLAN = BootstrapPlan(100, 0.8, (0.025, 0.975), False)
CT_PLAN = BootstrapPlan(200, 0.9, (0.05, 0.95), True)


@dataclass(frozen=True, eq=False)
class IntervalReport:
    method: str
    names: tuple
    estimate: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    full_estimate: np.ndarray
    repetition_mean: np.ndarray
    repetitions: np.ndarray
    plan: BootstrapPlan
    diagnostics: dict = field(default_factory=dict)

    def rows(self):
        return [
            {"name": n, "estimate": float(e), "ci_low": float(lo), "ci_high": float(hi)}
            for n, e, lo, hi in zip(self.names, self.estimate, self.ci_low, self.ci_high)
        ]


def bias_correct(full_estimate, repetition_mean) -> np.ndarray:
    full = np.asarray(full_estimate, dtype=float)
    mean = np.asarray(repetition_mean, dtype=float)
    if full.shape != mean.shape:
        raise ValueError(f"shape mismatch: {full.shape} vs {mean.shape}")
    return 2.0 * full - mean


def percentile_ci(samples, low: float, high: float) -> tuple[float, float]:
    """Nearest-rank empirical quantiles: the ``ceil(p * n)``-th smallest sample."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    if x.size == 0:
        raise ValueError("empty sample")
    if not 0 < low < high < 1:
        raise ValueError(f"need 0 < low < high < 1, got ({low}, {high})")

    def rank(p):
        # the small slack keeps p * n that is an integer in exact arithmetic on that integer
        return min(max(math.ceil(p * x.size - 1e-9), 1), x.size) - 1

    return float(x[rank(low)]), float(x[rank(high)])


def allocate(game, method: str, renorm: bool = False) -> Allocation:
    """One allocation of an estimated (or exact) variance game."""
    if method == "shapley":
        a = shapley_from_game(game)
    elif method == "pme":
        a = pme_from_game(game)
    elif method == "total-sobol":
        a = Allocation("total-sobol", singleton_totals(game), normalized=False, names=game.names)
    else:
        raise ConfigError(f"unknown method {method!r}; choose from {METHODS}")
    return renormalize(a) if renorm else a


def _one(args):
    ds, methods, k, eps, renorm, knn = args
    game = estimate_game(ds, k, eps, **knn)
    return [allocate(game, m, renorm).shares for m in methods]


def _repetition(args):
    ds, r, plan, methods, k, eps, renorm, knn, base = args
    try:
        rows = subsample_rows(ds.n, plan.fraction, plan.seed ^ r)
        part = ds if len(rows) == ds.n else ds.take(rows)
        if base is not None:
            # common query rows: the full-sample ones that survive the subsample
            kept = base[np.isin(base, rows)]
            if kept.size:
                knn = {**knn, "query_rows": np.searchsorted(rows, kept)}
        return _one((part, methods, k, eps, renorm, knn))
    except GSAError as exc:
        raise type(exc)(f"bootstrap repetition {r}: {exc}") from exc


def bootstrap_allocations(ds: Dataset, method, plan: BootstrapPlan, k: int = 3, eps: float = 0.0,
                          renormalize_shares: bool = False, ci_basis: str = "raw",
                          n_jobs: int = 1, **knn) -> dict:
    """Bootstrap intervals for one or several allocation methods.

    ``method`` is a method name or a sequence of them; the result maps each
    name to an :class:`IntervalReport`. All methods of a repetition share one
    estimated game. ``ci_basis="raw"`` takes quantiles of the repetition
    shares as they are; ``"shifted"`` moves them by the estimated bias
    ``full - mean`` as well. Keyword arguments (``n_query``, ``ties``) go to
    the estimator. With ``n_query`` the query rows are drawn once on the full
    sample (seeded by the plan seed) and each repetition averages over those
    of them that it keeps, so that repetitions and the full estimate share
    their Monte Carlo noise.
    """
    methods = (method,) if isinstance(method, str) else tuple(method)
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"unknown method {m!r}; choose from {METHODS}")
    if ci_basis not in CI_BASES:
        raise ConfigError(f"ci_basis must be one of {CI_BASES}")
    knn = dict(knn)
    knn.setdefault("seed", plan.seed)

    base = None
    if knn.get("n_query") is not None and "query_rows" not in knn:
        base = select_query_rows(ds.n, knn["n_query"], knn["seed"])
    full = _one((ds, methods, k, eps, renormalize_shares,
                 knn if base is None else {**knn, "query_rows": base}))
    jobs = [(ds, r, plan, methods, k, eps, renormalize_shares, knn, base) for r in range(plan.repetitions)]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            reps = list(pool.map(_repetition, jobs))
    else:
        reps = []
        for r, job in enumerate(jobs):
            reps.append(_repetition(job))
            logger.debug("repetition %d/%d done", r + 1, plan.repetitions)

    out = {}
    for j, m in enumerate(methods):
        samples = np.array([rep[j] for rep in reps])
        mean = samples.mean(axis=0)
        corrected = bias_correct(full[j], mean)
        estimate = corrected if plan.bias_correct else full[j]
        shift = full[j] - mean if ci_basis == "shifted" else np.zeros_like(mean)
        bounds = np.array([percentile_ci(samples[:, i] + shift[i], *plan.quantiles) for i in range(samples.shape[1])])
        out[m] = IntervalReport(
            method=m,
            names=tuple(ds.input_names),
            estimate=estimate,
            ci_low=bounds[:, 0],
            ci_high=bounds[:, 1],
            full_estimate=full[j],
            repetition_mean=mean,
            repetitions=samples,
            plan=plan,
            diagnostics={
                "uncorrected": full[j].tolist(),
                "corrected": corrected.tolist(),
                "ci_basis": ci_basis,
                "renormalized": renormalize_shares,
            },
        )
    return out
