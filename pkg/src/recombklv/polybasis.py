"""Centered and scaled monomial bases of bounded total degree.

The constant monomial is never part of a basis: mass preservation is handled
by the reduction itself, and a constant column would only add a redundant
coordinate to the pushed-forward points.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import comb

import numpy as np


@dataclass(frozen=True, eq=False)
class MonomialBasis:
    """Monomials ``prod_j ((x_j - center_j) / scale) ** e_j`` with ``1 <= |e| <= degree``.

    Exponents are in graded order: by total degree, and within a degree in
    the order ``x1^2, x1 x2, ..., x2^2, ...`` (i.e. combinations with
    replacement of the variable indices).
    """

    dimension: int
    degree: int
    center: np.ndarray
    scale: float
    exponents: tuple[tuple[int, ...], ...] = field(init=False)
    # each monomial after the first degree is parent monomial * one variable
    _parents: np.ndarray = field(init=False, repr=False)
    _factors: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        if self.degree < 0:
            raise ValueError("degree must be >= 0")
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        center = np.array(self.center, dtype=float).reshape(-1)
        if center.size == 1 and self.dimension > 1:
            center = np.full(self.dimension, center[0])
        if center.shape != (self.dimension,):
            raise ValueError(f"center must have {self.dimension} coordinates")
        center.setflags(write=False)
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "scale", float(self.scale))

        combos = [
            c for k in range(1, self.degree + 1)
            for c in itertools.combinations_with_replacement(range(self.dimension), k)
        ]
        position = {c: i for i, c in enumerate(combos)}
        parents = np.array([position[c[:-1]] if len(c) > 1 else -1 for c in combos], dtype=np.intp)
        factors = np.array([c[-1] for c in combos], dtype=np.intp)
        exponents = tuple(
            tuple(c.count(j) for j in range(self.dimension)) for c in combos
        )
        object.__setattr__(self, "exponents", exponents)
        object.__setattr__(self, "_parents", parents)
        object.__setattr__(self, "_factors", factors)

    def __len__(self) -> int:
        return len(self.exponents)

    @property
    def size(self) -> int:
        return len(self.exponents)

    def evaluate_many(self, points: np.ndarray) -> np.ndarray:
        """Evaluate every basis function at each row of ``points``; shape ``(n, size)``."""
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            points = points.reshape(-1, self.dimension)
        y = (points - self.center) / self.scale
        out = np.empty((len(y), self.size))
        for i, (parent, var) in enumerate(zip(self._parents, self._factors)):
            if parent < 0:
                out[:, i] = y[:, var]
            else:
                out[:, i] = out[:, parent] * y[:, var]
        return out

    def evaluate(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(1, self.dimension)
        return self.evaluate_many(x)[0]


def basis_size(N: int, r: int) -> int:
    """Number of non-constant monomials of degree <= r in N variables."""
    return comb(N + r, N) - 1


def build_basis(N: int, r: int, center=None, scale: float = 1.0) -> MonomialBasis:
    if center is None:
        center = np.zeros(N)
    return MonomialBasis(N, r, center, scale)
