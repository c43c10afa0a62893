"""Localized reduction: split a measure over a grid of small cells, reduce each cell."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from recombklv.errors import NumericalDegeneracy
from recombklv.measure import ParticleMeasure, center_of_mass
from recombklv.polybasis import basis_size, build_basis
from recombklv.recombine import ReductionReport, reduce_measure


@dataclass(frozen=True)
class Patch:
    center: np.ndarray
    radius: float
    indices: np.ndarray


@dataclass(frozen=True)
class Localization:
    patches: list[Patch]

    def __len__(self) -> int:
        return len(self.patches)


def cover_support(mu: ParticleMeasure, u: float, center: str = "cell") -> Localization:
    """Bucket particles into axis-aligned cells of side ``2u / sqrt(N)``.

    A cell of that side has diameter ``2u``, so every member lies within ``u``
    of the cell centre. With ``center="com"`` the patch centre is the patch's
    centre of mass instead, and members are only guaranteed to lie within
    ``2u`` of it. The grid is anchored at the origin; patches are ordered by
    cell coordinates.
    """
    if not u > 0:
        raise ValueError("radius must be positive")
    if center not in ("cell", "com"):
        raise ValueError(f"unknown centering {center!r}")
    N = mu.dim
    side = 2.0 * u / math.sqrt(N)
    cells = np.floor(mu.points / side).astype(np.int64)
    keys, inverse = np.unique(cells, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    order = np.argsort(inverse, kind="stable")
    bounds = np.cumsum(np.bincount(inverse, minlength=len(keys)))[:-1]
    patches = []
    for key, idx in zip(keys, np.split(order, bounds)):
        if center == "cell":
            c = (key + 0.5) * side
        else:
            c = center_of_mass(mu.subset(idx))
        patches.append(Patch(c, u, idx))
    return Localization(patches)


def reduce_localized(
    mu: ParticleMeasure,
    u: float,
    r: int,
    algorithm: str = "alg2",
    center: str = "cell",
    threads: int = 1,
    merge_tol: float = 0.0,
    return_index: bool = False,
):
    """Reduce every patch of the grid localization against degree-``r`` polynomials.

    Each patch uses a basis centred at the patch centre and scaled by ``u``.
    Patches with fewer than ``basis size + 2`` particles are kept as they are.
    Reduced patches are concatenated in patch order. Returns the measure and
    one report per patch, plus the surviving indices into ``mu`` with
    ``return_index=True``.
    """
    if r < 1:
        raise ValueError("reduction degree must be >= 1")
    loc = cover_support(mu, u, center)
    n = basis_size(mu.dim, r)

    def reduce_patch(item):
        pid, patch = item
        if len(patch.indices) < n + 2:
            k = len(patch.indices)
            return patch.indices, mu.weights[patch.indices], ReductionReport(k, k)
        basis = build_basis(mu.dim, r, patch.center, u)
        try:
            reduced, report, local = reduce_measure(
                mu.subset(patch.indices), basis, algorithm, merge_tol, return_index=True
            )
        except NumericalDegeneracy as exc:
            raise NumericalDegeneracy(f"patch {pid}: {exc}") from exc
        return patch.indices[local], reduced.weights, report

    items = list(enumerate(loc.patches))
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(reduce_patch, items))
    else:
        results = [reduce_patch(item) for item in items]

    index = np.concatenate([res[0] for res in results])
    weights = np.concatenate([res[1] for res in results])
    reports = [res[2] for res in results]
    out = ParticleMeasure(mu.points[index], weights)
    return (out, reports, index) if return_index else (out, reports)
