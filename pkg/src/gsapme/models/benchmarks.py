"""Analytic benchmarks: correlated linear Gaussian model and Ishigami function."""
from __future__ import annotations

import numpy as np

from ..dataset import NUMERIC, ColumnSpec, Dataset
from ..errors import ModelError
from ..games import CooperativeGame


def _check_correlation(corr: np.ndarray, d: int, definite: bool = True) -> np.ndarray:
    corr = np.asarray(corr, dtype=float)
    if corr.shape != (d, d):
        raise ModelError(f"correlation matrix must be {d}x{d}, got {corr.shape}")
    if not np.allclose(corr, corr.T, atol=1e-12):
        raise ModelError("correlation matrix must be symmetric")
    if not np.allclose(np.diag(corr), 1.0):
        raise ModelError("correlation matrix must have a unit diagonal")
    eig = np.linalg.eigvalsh(corr)
    if eig.min() <= (1e-12 if definite else -1e-12):
        raise ModelError(f"correlation matrix is not positive definite (min eigenvalue {eig.min():.3g})")
    return corr


def _numeric_dataset(x: np.ndarray, y: np.ndarray, names, output: str = "Y") -> Dataset:
    specs = [ColumnSpec(n, NUMERIC) for n in names] + [ColumnSpec(output, NUMERIC, output=True)]
    data = {n: x[:, j] for j, n in enumerate(names)}
    data[output] = y
    return Dataset.from_columns(specs, data)


def linear_gaussian_sample(n: int, weights, correlation, seed: int) -> Dataset:
    """``X ~ N(0, correlation)`` and ``Y = weights . X``."""
    w = np.asarray(weights, dtype=float)
    corr = _check_correlation(correlation, len(w))
    rng = np.random.default_rng(seed)
    x = rng.multivariate_normal(np.zeros(len(w)), corr, size=n, method="cholesky")
    return _numeric_dataset(x, x @ w, [f"X{i + 1}" for i in range(len(w))])


def linear_gaussian_game(weights, correlation) -> CooperativeGame:
    """Exact game of the linear Gaussian model.

    ``V(E(Y | X_A)) = c_A' C_AA^{-1} c_A`` with ``c = C w`` the covariance of
    the inputs with the output.
    """
    w = np.asarray(weights, dtype=float)
    d = len(w)
    corr = _check_correlation(correlation, d, definite=False)
    cov_xy = corr @ w
    var_y = float(w @ corr @ w)
    if var_y <= 0:
        raise ModelError("degenerate output: zero variance")
    values = np.zeros(1 << d)
    for mask in range(1, 1 << d):
        idx = [i for i in range(d) if mask >> i & 1]
        c = cov_xy[idx]
        values[mask] = float(c @ np.linalg.lstsq(corr[np.ix_(idx, idx)], c, rcond=None)[0]) / var_y
    values[-1] = 1.0
    return CooperativeGame(d, values, True, tuple(f"X{i + 1}" for i in range(d)), {"source": "exact-gaussian"})


def ishigami(x: np.ndarray, a: float = 7.0, b: float = 0.1) -> np.ndarray:
    x = np.atleast_2d(x)
    return np.sin(x[:, 0]) + a * np.sin(x[:, 1]) ** 2 + b * x[:, 2] ** 4 * np.sin(x[:, 0])


def ishigami_sample(n: int, a: float = 7.0, b: float = 0.1, seed: int = 0) -> Dataset:
    """Independent ``U(-pi, pi)`` inputs through the Ishigami function."""
    if n < 1:
        raise ModelError("n must be positive")
    rng = np.random.default_rng(seed)
    x = rng.uniform(-np.pi, np.pi, size=(n, 3))
    return _numeric_dataset(x, ishigami(x, a, b), ["X1", "X2", "X3"])


def ishigami_variances(a: float = 7.0, b: float = 0.1) -> dict:
    """Closed-form ANOVA variances of the Ishigami function on ``[-pi, pi]^3``."""
    pi4 = np.pi**4
    v1 = 0.5 * (1 + b * pi4 / 5) ** 2
    v2 = a**2 / 8
    v13 = b**2 * np.pi**8 * (1 / 18 - 1 / 50)
    return {"total": v1 + v2 + v13, "1": v1, "2": v2, "3": 0.0, "13": v13}


def ishigami_total_indices(a: float = 7.0, b: float = 0.1) -> np.ndarray:
    v = ishigami_variances(a, b)
    return np.array([v["1"] + v["13"], v["2"], v["13"]]) / v["total"]


def ishigami_first_order(a: float = 7.0, b: float = 0.1) -> np.ndarray:
    v = ishigami_variances(a, b)
    return np.array([v["1"], v["2"], 0.0]) / v["total"]
