"""Carathéodory-type support reduction of discrete measures.

Every routine keeps the centre of mass of a point cloud in R^n fixed while
removing particles. ``reduce_algorithm1`` eliminates one (or more) particles
per linear solve; ``reduce_algorithm2`` repeatedly merges the cloud into
``2(n+1)`` block barycentres, reduces those, and drops the blocks that lost
their mass, halving the support per round.

Supports are only ever index subsets of the input: no particle is moved.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from fractions import Fraction

import numpy as np

from recombklv.errors import NumericalDegeneracy
from recombklv.measure import ParticleMeasure, _duplicate_groups
from recombklv.polybasis import MonomialBasis

SNAP_RTOL = 1e-14
AFFINE_RTOL = 1e-11


@dataclass
class ReductionReport:
    input_support: int
    output_support: int
    procedure_a_calls: int = 0
    elimination_steps: int = 0
    max_moment_error: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def _as_points(points) -> np.ndarray:
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    return X


def null_vector(points) -> np.ndarray:
    """Unit vector ``u`` with ``sum u_i x_i = 0`` and ``sum u_i = 0`` for n+2 points in R^n.

    Taken from the smallest right singular direction of the stacked
    ``(n+1) x (n+2)`` constraint matrix. The sign is fixed so that the first
    non-negligible entry is positive.
    """
    X = _as_points(points)
    m, n = X.shape
    if m != n + 2:
        raise ValueError(f"need exactly n+2 = {n + 2} points in R^{n}, got {m}")
    A = np.vstack([X.T, np.ones(m)])
    _, _, vt = np.linalg.svd(A)
    u = vt[-1]
    residual = np.max(np.abs(A @ u))
    bound = 1e-10 * (1.0 + np.max(np.abs(X), initial=0.0))
    if not residual <= bound:
        raise NumericalDegeneracy(
            f"null vector residual {residual:.3e} exceeds {bound:.3e}; rescale or center the input"
        )
    lead = np.flatnonzero(np.abs(u) > 1e-12)
    if len(lead) and u[lead[0]] < 0:
        u = -u
    return u


def _conditioned_null_vector(X: np.ndarray, w: np.ndarray) -> np.ndarray:
    # the relation is invariant under translation and scaling of the points
    Y = X - (w @ X) / w.sum()
    s = np.max(np.abs(Y), initial=0.0)
    if s > 0:
        Y = Y / s
    return null_vector(Y)


def _shift(w: np.ndarray, u: np.ndarray, sign: float) -> np.ndarray:
    """Move along ``sign * u`` until the first weight hits zero."""
    direction = sign * u
    neg = direction < 0
    ratios = w[neg] / -direction[neg]
    c = ratios.min()
    out = w + c * direction
    hit = np.flatnonzero(neg)[ratios == c]
    out[hit] = 0.0
    out[out <= SNAP_RTOL * w.sum()] = 0.0
    return out


def _eliminate(X: np.ndarray, w: np.ndarray, direction: str = "auto") -> np.ndarray:
    u = _conditioned_null_vector(X, w)
    if direction == "subtract":
        return _shift(w, u, -1.0)
    if direction == "add":
        return _shift(w, u, 1.0)
    sub = _shift(w, u, -1.0)
    add = _shift(w, u, 1.0)
    # prefer the direction removing more particles; subtract on a tie
    if np.count_nonzero(add == 0) > np.count_nonzero(sub == 0):
        return add
    return sub


def caratheodory_step(points, weights, direction: str = "auto") -> np.ndarray:
    """One elimination step on n+2 weighted points in R^n.

    Returns new nonnegative weights with the same sum and centre of mass and
    at least one exact zero. ``direction`` is ``"add"``, ``"subtract"`` or
    ``"auto"`` (the one that zeroes more weights, subtract on a tie).
    """
    if direction not in ("auto", "add", "subtract"):
        raise ValueError(f"unknown direction {direction!r}")
    X = _as_points(points)
    w = np.asarray(weights, dtype=float).copy()
    if len(w) != len(X):
        raise ValueError("points and weights differ in length")
    if np.any(w <= 0):
        raise ValueError("weights must be strictly positive")
    return _eliminate(X, w, direction)


def _eliminate_sweep(X: np.ndarray, w: np.ndarray, alive: np.ndarray) -> tuple[np.ndarray, int]:
    """Apply elimination steps to the first n+2 survivors until at most n+1 remain.

    ``w`` is updated in place; returns the surviving indices (ascending) and
    the number of steps taken.
    """
    n = X.shape[1]
    group = [int(i) for i in alive[: n + 2]]
    stream = iter(int(i) for i in alive[n + 2:])
    steps = 0
    exhausted = False
    while len(group) == n + 2:
        idx = np.array(group)
        w[idx] = _eliminate(X[idx], w[idx])
        steps += 1
        group = [i for i in group if w[i] > 0]
        while len(group) < n + 2 and not exhausted:
            nxt = next(stream, None)
            if nxt is None:
                exhausted = True
            else:
                group.append(nxt)
    return np.array(group, dtype=np.intp), steps


def affine_dimension(points, tol: float = 1e-10) -> int:
    """Rank of the centred point matrix, counting singular values above ``tol * largest``."""
    X = _as_points(points)
    if len(X) <= 1 or X.shape[1] == 0:
        return 0
    s = np.linalg.svd(X - X.mean(axis=0), compute_uv=False)
    if s[0] == 0:
        return 0
    return int(np.count_nonzero(s > tol * s[0]))


def _affine_cleanup(X: np.ndarray, w: np.ndarray, alive: np.ndarray) -> tuple[np.ndarray, int]:
    """Keep eliminating inside the affine hull of the survivors until at most dim + 1 remain."""
    steps = 0
    while len(alive) > 1:
        P = X[alive]
        C = P - (w[alive] @ P) / w[alive].sum()
        _, s, vt = np.linalg.svd(C, full_matrices=False)
        dim = 0 if s[0] == 0 else int(np.count_nonzero(s > AFFINE_RTOL * s[0]))
        if len(alive) <= dim + 1:
            break
        coords = np.zeros((len(X), dim))
        coords[alive] = C @ vt[:dim].T
        alive, k = _eliminate_sweep(coords, w, alive)
        steps += k
    return alive, steps


def _algorithm1(X: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, int]:
    alive, steps = _eliminate_sweep(X, w, np.arange(len(w)))
    alive, more = _affine_cleanup(X, w, alive)
    return alive, steps + more


def _procedure_a(X: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, int]:
    return _eliminate_sweep(X, w, np.arange(len(w)))


def _algorithm2(X: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, int, int]:
    n = X.shape[1]
    n_blocks = 2 * (n + 1)
    alive = np.arange(len(w))
    calls = steps = 0
    while len(alive) > n + 1:
        sizes = np.array([len(b) for b in np.array_split(np.arange(len(alive)), n_blocks)])
        sizes = sizes[sizes > 0]
        starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
        wa = w[alive]
        Xa = X[alive]
        nu = np.add.reduceat(wa, starts)
        centers = np.add.reduceat(wa[:, None] * Xa, starts, axis=0) / nu[:, None]
        nu_new = nu.copy()
        _, k = _procedure_a(centers, nu_new)
        steps += k
        calls += 1
        wa = wa * np.repeat(nu_new / nu, sizes)
        keep = wa > 0
        w[alive] = wa
        alive = alive[keep]
    alive, k = _affine_cleanup(X, w, alive)
    return alive, calls, steps + k


def _relative_moment_error(X, w_in, w_out) -> float:
    scale = np.abs(X).T @ w_in
    diff = np.abs(X.T @ (w_out - w_in))
    rel = np.where(scale > 0, diff / np.where(scale > 0, scale, 1.0), diff)
    return float(np.max(rel, initial=0.0))


def _run(X: np.ndarray, w: np.ndarray, algorithm: str) -> tuple[np.ndarray, np.ndarray, ReductionReport]:
    """Reduce weights ``w`` on points ``X``; returns surviving indices, their weights, report."""
    mass = w.sum()
    work = w / mass
    if algorithm in ("alg1", "1", 1):
        alive, steps = _algorithm1(X, work)
        calls = 0
    elif algorithm in ("alg2", "2", 2):
        alive, calls, steps = _algorithm2(X, work)
    else:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    w_out = np.zeros_like(w)
    w_out[alive] = work[alive] * mass
    report = ReductionReport(
        input_support=len(w),
        output_support=len(alive),
        procedure_a_calls=calls,
        elimination_steps=steps,
        max_moment_error=_relative_moment_error(X, w, w_out),
    )
    return alive, w_out[alive], report


def reduce_algorithm1(mu_P: ParticleMeasure, return_index: bool = False):
    """Sequential elimination down to at most (affine dimension + 1) particles."""
    alive, weights, report = _run(mu_P.points, mu_P.weights.copy(), "alg1")
    out = ParticleMeasure(mu_P.points[alive], weights)
    return (out, report, alive) if return_index else (out, report)


def reduce_algorithm2(mu_P: ParticleMeasure, return_index: bool = False):
    """Hierarchical reduction via block barycentres and Procedure A."""
    alive, weights, report = _run(mu_P.points, mu_P.weights.copy(), "alg2")
    out = ParticleMeasure(mu_P.points[alive], weights)
    return (out, report, alive) if return_index else (out, report)


def procedure_A(nu: ParticleMeasure, return_index: bool = False):
    """Reduce a measure on exactly 2(n+1) points of R^n to at most n+1 of them."""
    n = nu.dim
    if len(nu) != 2 * (n + 1):
        raise ValueError(f"procedure_A needs exactly {2 * (n + 1)} particles, got {len(nu)}")
    w = nu.weights / nu.weights.sum()
    alive, _ = _procedure_a(nu.points, w)
    out = ParticleMeasure(nu.points[alive], w[alive] * nu.weights.sum())
    return (out, alive) if return_index else out


def reduce_measure(
    mu: ParticleMeasure,
    basis: MonomialBasis,
    algorithm: str = "alg2",
    merge_tol: float = 0.0,
    return_index: bool = False,
):
    """Reduced measure of ``mu`` with respect to the functions in ``basis``.

    The output lives on an index subset of ``mu`` (returned with
    ``return_index=True``), integrates every basis function like ``mu`` and
    has at most ``len(basis) + 1`` particles.
    """
    if basis.dimension != mu.dim:
        raise ValueError(f"basis is over R^{basis.dimension}, measure over R^{mu.dim}")
    n = basis.size
    if len(mu) <= n + 1:
        report = ReductionReport(len(mu), len(mu))
        index = np.arange(len(mu))
        return (mu, report, index) if return_index else (mu, report)

    Y = basis.evaluate_many(mu.points)
    if n == 0:
        reps, labels = np.array([0]), np.zeros(len(mu), dtype=np.intp)
    else:
        reps, labels = _duplicate_groups(Y, merge_tol)
    merged_w = np.bincount(labels, weights=mu.weights, minlength=len(reps))
    alive, weights, report = _run(Y[reps], merged_w, algorithm)
    report.input_support = len(mu)
    report.max_moment_error = _relative_moment_error(
        Y, mu.weights, np.bincount(reps[alive], weights=weights, minlength=len(mu))
    )
    index = reps[alive]
    out = ParticleMeasure(mu.points[index], weights)
    return (out, report, index) if return_index else (out, report)


def wendel_probability(N: int, k: int) -> float:
    """Probability that k i.i.d. uniform points on the sphere in R^N have the origin in their hull."""
    if N < 1 or k < 1:
        raise ValueError("N and k must be >= 1")
    tail = sum(math.comb(k - 1, j) for j in range(N))
    return float(1 - Fraction(tail, 2 ** (k - 1)))
