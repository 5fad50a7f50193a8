"""Given data with an exogenous correlated input.

``Y = X1`` while ``X2`` is correlated with ``X1`` but absent from the model.
The Shapley effect still credits ``X2`` with ``rho**2 / 2``; PME gives it zero.
"""
from gsapme.allocations import pme_from_game, shapley_from_game
from gsapme.estimation import estimate_game
from gsapme.models.benchmarks import linear_gaussian_game, linear_gaussian_sample

for rho in (0.3, 0.6, 0.9):
    corr = [[1.0, rho], [rho, 1.0]]
    exact = linear_gaussian_game([1.0, 0.0], corr)
    est = estimate_game(linear_gaussian_sample(10_000, [1.0, 0.0], corr, seed=1), k=3)
    print(f"rho = {rho}")
    print(f"  exact     shapley {shapley_from_game(exact).shares.round(4)}  pme {pme_from_game(exact).shares}")
    print(f"  estimated shapley {shapley_from_game(est).shares.round(4)}  pme {pme_from_game(est).shares.round(4)}")
    print(f"  estimated game    {est.values.round(4)}")
