"""Three-compartment SIR epidemic with correlated uncertain parameters.

Compartments are population fractions, so ``S + I + R = 1``:

    dS/dt = -beta S I
    dI/dt =  beta S I - gamma I
    dR/dt =  gamma I
"""
from __future__ import annotations

import logging

import numpy as np
from scipy.stats import norm

from ..dataset import NUMERIC, ColumnSpec, Dataset
from ..errors import ModelError
from .benchmarks import _check_correlation

logger = logging.getLogger(__name__)

PARAMETERS = ("beta", "gamma", "I0")
OUTPUTS = ("peak_infected", "peak_time", "final_size")


def _rhs(s, i, beta, gamma):
    infection = beta * s * i
    recovery = gamma * i
    return -infection, infection - recovery, recovery


def integrate_sir(beta, gamma, i0, t_max: float = 200.0, dt: float = 0.1, max_halvings: int = 12):
    """Classical fourth-order Runge-Kutta on a fixed grid, vectorised over runs.

    Returns ``(t, S, I, R)`` with arrays of shape ``(steps + 1, runs)``. If a
    step drives any compartment negative the whole grid is recomputed with
    half the step.
    """
    beta, gamma, i0 = (np.atleast_1d(np.asarray(v, dtype=float)) for v in (beta, gamma, i0))
    beta, gamma, i0 = np.broadcast_arrays(beta, gamma, i0)
    if np.any(i0 < 0) or np.any(i0 > 1):
        raise ModelError("initial infected fraction must lie in [0, 1]")
    for _ in range(max_halvings + 1):
        steps = int(np.ceil(t_max / dt))
        h = t_max / steps
        s = np.empty((steps + 1, beta.size))
        i = np.empty_like(s)
        r = np.empty_like(s)
        s[0], i[0], r[0] = 1.0 - i0, i0, 0.0
        ok = True
        for n in range(steps):
            s0, i_0, r0 = s[n], i[n], r[n]
            k1 = _rhs(s0, i_0, beta, gamma)
            k2 = _rhs(s0 + h / 2 * k1[0], i_0 + h / 2 * k1[1], beta, gamma)
            k3 = _rhs(s0 + h / 2 * k2[0], i_0 + h / 2 * k2[1], beta, gamma)
            k4 = _rhs(s0 + h * k3[0], i_0 + h * k3[1], beta, gamma)
            s[n + 1] = s0 + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
            i[n + 1] = i_0 + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
            r[n + 1] = r0 + h / 6 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
            if s[n + 1].min() < 0 or i[n + 1].min() < 0:
                ok = False
                break
        if ok:
            return np.linspace(0.0, steps * h, steps + 1), s, i, r
        logger.info("negative compartment with step %g; halving", h)
        dt = h / 2
    raise ModelError("could not find a step size keeping compartments non-negative")


def sir_outputs(beta, gamma, i0, t_max: float = 200.0, dt: float = 0.1) -> dict:
    t, s, i, r = integrate_sir(beta, gamma, i0, t_max, dt)
    peak = i.argmax(axis=0)
    return {
        "peak_infected": i.max(axis=0),
        "peak_time": t[peak],
        "final_size": 1.0 - s[-1],
    }


def sir_parameters(n: int, param_correlation, seed: int) -> np.ndarray:
    """Correlated ``(beta, gamma, I0)`` through a Gaussian copula.

    Marginals: ``beta`` log-normal around 0.3/day, ``gamma`` log-normal around
    0.1/day, ``I0`` log-uniform on ``[1e-4, 1e-2]``.
    """
    corr = _check_correlation(param_correlation, 3)
    rng = np.random.default_rng(seed)
    z = rng.multivariate_normal(np.zeros(3), corr, size=n, method="cholesky")
    beta = 0.3 * np.exp(0.3 * z[:, 0])
    gamma = 0.1 * np.exp(0.3 * z[:, 1])
    i0 = 10.0 ** (-4 + 2 * norm.cdf(z[:, 2]))
    return np.column_stack([beta, gamma, i0])


def sir_demo_sample(n: int, param_correlation, seed: int, output: str = "peak_infected",
                    t_max: float = 200.0, dt: float = 0.1) -> Dataset:
    if output not in OUTPUTS:
        raise ModelError(f"output must be one of {OUTPUTS}")
    params = sir_parameters(n, param_correlation, seed)
    y = sir_outputs(params[:, 0], params[:, 1], params[:, 2], t_max, dt)[output]
    specs = [ColumnSpec(p, NUMERIC) for p in PARAMETERS] + [ColumnSpec(output, NUMERIC, output=True)]
    data = {p: params[:, j] for j, p in enumerate(PARAMETERS)}
    data[output] = y
    return Dataset.from_columns(specs, data)
