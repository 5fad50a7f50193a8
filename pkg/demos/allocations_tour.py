"""Shapley values, proportional values and PME on small hand-made games.

Run with ``python3 demos/allocations_tour.py``.
"""
import numpy as np

from gsapme.allocations import (moebius_transform, pme_from_game, proportional_values_random_order,
                                shapley_from_game, shapley_permutation)
from gsapme.games import CooperativeGame, dual_game
from gsapme.oracle import proportional_bruteforce, shapley_bruteforce

# glove game: player 3 holds a left glove, players 1 and 2 a right one each
glove = CooperativeGame(3, [0, 0, 0, 0, 0, 1, 1, 1], names=("right1", "right2", "left"))
print("glove game")
print("  dividends     ", moebius_transform(glove))
print("  shapley       ", shapley_from_game(glove).as_dict())
print("  orderings     ", shapley_permutation(glove).shares)
print("  brute force   ", shapley_bruteforce(glove).shares)

# the Shapley value of a game and of its dual coincide; proportional values do not
g = CooperativeGame(2, [0.0, 0.2, 0.5, 1.0])
w = dual_game(g)
print("\ngame v = (0.2, 0.5, 1) and its dual w =", w.values[1:])
print("  shapley(v), shapley(w)     ", shapley_from_game(g).shares, shapley_from_game(w).shares)
print("  proportional(v), (w)       ", proportional_values_random_order(g).shares,
      proportional_values_random_order(w).shares)
print("  oracle proportional(w)     ", proportional_bruteforce(w).shares)

# an input whose removal never costs anything gets exactly zero PME
joke = CooperativeGame(2, [0.0, 1.0, 0.81, 1.0], names=("X1", "X2"))
pme = pme_from_game(joke)
print("\nexogenous X2 correlated with X1 (rho = 0.9)")
print("  shapley", shapley_from_game(joke).as_dict())
print("  pme    ", pme.as_dict(), " zero set:", pme.diagnostics["zero_set"])

# symmetry
d = 4
sym = CooperativeGame(d, [bin(m).count("1") / d for m in range(1 << d)])
assert np.allclose(pme_from_game(sym).shares, 1 / d)
print("\nsymmetric game: every method gives 1/d =", 1 / d)
