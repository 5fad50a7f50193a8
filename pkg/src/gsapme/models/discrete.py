"""Finite discrete models: exact oracles for the estimation pipeline."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ..dataset import DISCRETE, NUMERIC, ColumnSpec, Dataset
from ..errors import ModelError


@dataclass(frozen=True, eq=False)
class DiscreteModel:
    """Joint probability table over finitely many atoms with a deterministic output."""

    atoms: np.ndarray
    probs: np.ndarray
    outputs: np.ndarray
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        atoms = np.atleast_2d(np.asarray(self.atoms))
        probs = np.asarray(self.probs, dtype=float)
        outputs = np.asarray(self.outputs, dtype=float)
        if probs.shape != (atoms.shape[0],) or outputs.shape != (atoms.shape[0],):
            raise ModelError("atoms, probs and outputs must agree in length")
        if np.any(probs < 0):
            raise ModelError("probabilities must be non-negative")
        if abs(probs.sum() - 1.0) > 1e-12:
            raise ModelError(f"probabilities sum to {probs.sum()!r}, not 1")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "outputs", outputs)
        if self.names is None:
            object.__setattr__(self, "names", tuple(f"X{i + 1}" for i in range(atoms.shape[1])))

    @property
    def d(self) -> int:
        return self.atoms.shape[1]

    @classmethod
    def from_function(cls, supports: Sequence[Sequence[float]], f: Callable,
                      joint: Callable | None = None, names=None) -> "DiscreteModel":
        """Product support with ``joint(x)`` giving unnormalised weights.

        Without ``joint`` the inputs are independent and uniform on their
        supports.
        """
        atoms = np.array(list(itertools.product(*supports)), dtype=float)
        weights = np.ones(len(atoms)) if joint is None else np.array([joint(a) for a in atoms], dtype=float)
        keep = weights > 0
        atoms, weights = atoms[keep], weights[keep]
        probs = weights / weights.sum()
        outputs = np.array([f(a) for a in atoms], dtype=float)
        return cls(atoms, probs, outputs, names)

    def sample(self, n: int, seed: int, output: str = "Y") -> Dataset:
        rng = np.random.default_rng(seed)
        rows = rng.choice(len(self.probs), size=n, p=self.probs)
        x = self.atoms[rows]
        specs = []
        data = {}
        for j, name in enumerate(self.names):
            col = x[:, j]
            if np.all(self.atoms[:, j] == np.round(self.atoms[:, j])):
                specs.append(ColumnSpec(name, DISCRETE))
                data[name] = col.astype(np.int64)
            else:
                specs.append(ColumnSpec(name, NUMERIC))
                data[name] = col
        specs.append(ColumnSpec(output, NUMERIC, output=True))
        data[output] = self.outputs[rows]
        return Dataset.from_columns(specs, data)


def correlated_bits(p_equal: float, f: Callable = lambda x: x[0]) -> DiscreteModel:
    """Two fair bits with ``P(X1 = X2) = p_equal``."""
    if not 0.0 <= p_equal <= 1.0:
        raise ModelError("p_equal must be a probability")
    atoms = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=float)
    probs = np.array([p_equal, 1 - p_equal, 1 - p_equal, p_equal]) / 2
    return DiscreteModel(atoms, probs, np.array([f(a) for a in atoms]))
