"""Weighted point clouds in R^N and the pushforward by a polynomial basis."""

from __future__ import annotations

import bisect
import csv
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from recombklv.polybasis import MonomialBasis


@dataclass(frozen=True, eq=False)
class ParticleMeasure:
    """A discrete measure ``sum_i w_i delta_{x_i}`` with strictly positive weights.

    ``points`` has shape ``(n, N)``; a 1-d array is read as ``n`` points in R^1.
    Particles with weight exactly zero are dropped, negative or non-finite
    input is rejected. Both arrays are made read-only.
    """

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        points = np.array(self.points, dtype=float)
        weights = np.array(self.weights, dtype=float).reshape(-1)
        if points.ndim == 1:
            points = points.reshape(-1, 1)
        if points.ndim != 2 or points.shape[1] < 1:
            raise ValueError(f"points must have shape (n, N) with N >= 1, got {points.shape}")
        if len(points) != len(weights):
            raise ValueError(f"{len(points)} points but {len(weights)} weights")
        if not (np.all(np.isfinite(points)) and np.all(np.isfinite(weights))):
            raise ValueError("points and weights must be finite")
        if np.any(weights < 0):
            raise ValueError("weights must be nonnegative")
        keep = weights > 0
        if not keep.all():
            points, weights = points[keep], weights[keep]
        if len(weights) == 0:
            raise ValueError("a measure needs at least one particle of positive weight")
        points.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "weights", weights)

    def __len__(self) -> int:
        return len(self.weights)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def subset(self, index) -> ParticleMeasure:
        return ParticleMeasure(self.points[index], self.weights[index])

    def integrate(self, f) -> float:
        """``sum_i w_i f(x_i)`` for a function ``f`` vectorized over rows."""
        values = np.asarray(f(self.points), dtype=float).reshape(-1)
        return float(np.dot(self.weights, values))


def total_mass(mu: ParticleMeasure) -> float:
    return float(np.sum(mu.weights))


def center_of_mass(mu: ParticleMeasure) -> np.ndarray:
    """Weighted mean of the points (divided by the total mass)."""
    return mu.weights @ mu.points / np.sum(mu.weights)


def pushforward_by_basis(mu: ParticleMeasure, basis: MonomialBasis) -> tuple[ParticleMeasure, np.ndarray]:
    """Law of ``x -> (p_1(x), ..., p_n(x))`` under ``mu``.

    Returns the image measure together with the index map back into ``mu``
    (row ``i`` of the image is the evaluation at ``mu.points[index[i]]``).
    """
    if basis.dimension != mu.dim:
        raise ValueError(f"basis is over R^{basis.dimension}, measure over R^{mu.dim}")
    values = basis.evaluate_many(mu.points)
    return ParticleMeasure(values, mu.weights), np.arange(len(mu))


def _duplicate_groups(points: np.ndarray, tol: float) -> tuple[np.ndarray, np.ndarray]:
    """Representative index per group and group label per point.

    Points are visited in index order; each joins the first representative
    within ``tol`` in max norm, otherwise it becomes a representative. So
    representatives are pairwise more than ``tol`` apart.
    """
    n = len(points)
    if tol == 0:
        _, first, inverse = np.unique(points, axis=0, return_index=True, return_inverse=True)
        inverse = inverse.reshape(-1)
        # relabel groups by first occurrence so output order follows input order
        order = np.argsort(first, kind="stable")
        relabel = np.empty_like(order)
        relabel[order] = np.arange(len(order))
        return first[order], relabel[inverse]

    keys: list[float] = []  # first coordinate of representatives, sorted
    key_reps: list[int] = []
    reps: list[int] = []
    labels = np.empty(n, dtype=np.intp)
    for i in range(n):
        x = points[i]
        lo = bisect.bisect_left(keys, x[0] - tol)
        hi = bisect.bisect_right(keys, x[0] + tol)
        match = -1
        for pos in range(lo, hi):
            g = key_reps[pos]
            if np.max(np.abs(points[reps[g]] - x)) <= tol and (match < 0 or g < match):
                match = g
        if match < 0:
            match = len(reps)
            reps.append(i)
            at = bisect.bisect_right(keys, x[0])
            keys.insert(at, x[0])
            key_reps.insert(at, match)
        labels[i] = match
    return np.asarray(reps, dtype=np.intp), labels


def merge_duplicates(mu: ParticleMeasure, tol: float = 0.0, return_index: bool = False):
    """Combine particles closer than ``tol`` (max norm) into one.

    The merged particle sits at the first-encountered member of its group and
    carries the summed weight. With ``return_index=True`` also returns the
    index of each output particle in ``mu``.
    """
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    reps, labels = _duplicate_groups(mu.points, tol)
    weights = np.bincount(labels, weights=mu.weights, minlength=len(reps))
    merged = ParticleMeasure(mu.points[reps], weights)
    if return_index:
        return merged, reps
    return merged


def read_particles_csv(path) -> ParticleMeasure:
    """Read the ``x1,...,xN,weight`` particle format."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[-1].strip() != "weight" or len(header) < 2:
            raise ValueError(f"{path}: expected header x1,...,xN,weight")
        rows = [row for row in reader if row]
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    if np.any(data[:, -1] <= 0):
        raise ValueError(f"{path}: weights must be strictly positive")
    return ParticleMeasure(data[:, :-1], data[:, -1])


def write_particles_csv(mu: ParticleMeasure, path) -> None:
    header = [f"x{j + 1}" for j in range(mu.dim)] + ["weight"]
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for x, w in zip(mu.points, mu.weights):
            writer.writerow([repr(float(v)) for v in x] + [repr(float(w))])
