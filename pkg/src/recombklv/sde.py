"""Vector-field models, transport along bounded-variation paths, the KLV kernel.

A model evaluates all of its fields at once: ``fields(X)`` maps an array of
states with shape ``(P, N)`` to shape ``(P, d+1, N)``, entry ``[:, 0]`` being
the drift field ``V_0``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from recombklv.cubature import BVPath, WienerCubature, rescale
from recombklv.errors import ConfigError, OdeDivergence
from recombklv.measure import ParticleMeasure

BLOWUP_NORM = 1e12
MAX_SUBSTEPS = 2**20


@dataclass(frozen=True)
class Payoff:
    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    params: dict = field(default_factory=dict)

    def __call__(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        return self.fn(X)


def make_payoff(name: str, **params) -> Payoff:
    """Payoff registry: ``constant``, ``identity``, ``square``, ``call``, ``put``.

    All but ``constant`` act on coordinate ``component`` (default 0); ``call``
    and ``put`` take a strike ``K``.
    """
    c = int(params.get("component", 0))
    if name == "constant":
        fn = lambda X: np.ones(len(X))
    elif name == "identity":
        fn = lambda X: X[:, c].copy()
    elif name == "square":
        fn = lambda X: X[:, c] ** 2
    elif name in ("call", "put"):
        if "K" not in params:
            raise ConfigError(f"payoff {name!r} needs a strike K")
        K = float(params["K"])
        if name == "call":
            fn = lambda X: np.maximum(X[:, c] - K, 0.0)
        else:
            fn = lambda X: np.maximum(K - X[:, c], 0.0)
    else:
        raise ConfigError(f"unknown payoff {name!r}")
    return Payoff(name, fn, dict(params))


@dataclass(frozen=True)
class VectorFieldModel:
    """Driving fields ``V_0..V_d`` on R^N with declared analysis inputs.

    ``hormander_step`` is the declared bracket depth ``p`` and ``field_bound``
    the declared sup-norm bound on the fields (``None`` when unbounded).
    ``exact`` optionally returns the closed-form ``E f(xi_{T,x})`` for a payoff,
    or ``None`` if that payoff has no closed form for this model.
    """

    name: str
    state_dim: int
    driving_dim: int
    fields: Callable[[np.ndarray], np.ndarray]
    hormander_step: int = 1
    field_bound: float | None = None
    exact: Callable[[Payoff, np.ndarray, float], float | None] | None = None
    params: dict = field(default_factory=dict)

    def exact_expectation(self, payoff: Payoff, x0, T: float) -> float | None:
        if self.exact is None:
            return None
        return self.exact(payoff, np.asarray(x0, dtype=float), T)


def _rk4(model: VectorFieldModel, Y: np.ndarray, coef: np.ndarray, n: int) -> np.ndarray:
    """``n`` classical RK4 steps of ``y' = sum_i coef_i V_i(y)`` over unit time."""
    h = 1.0 / n

    def rhs(Z):
        V = model.fields(Z)
        out = coef[0] * V[:, 0]
        for i in range(1, len(coef)):
            out = out + coef[i] * V[:, i]
        return out

    for _ in range(n):
        k1 = rhs(Y)
        k2 = rhs(Y + 0.5 * h * k1)
        k3 = rhs(Y + 0.5 * h * k2)
        k4 = rhs(Y + h * k3)
        Y = Y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return Y


def _segment(model: VectorFieldModel, X: np.ndarray, dt: float, dw: np.ndarray, ode_tol: float) -> np.ndarray:
    """Flow of one linear segment for every row of ``X``.

    The segment is reparametrized to unit time, so the vector field is
    ``V_0 dt + sum_i V_i dw_i``. Substeps double per particle until two
    successive resolutions agree to ``ode_tol`` (relative to ``max(1, |y|)``);
    the finer one is kept. Each particle's result depends only on itself.
    """
    coef = np.concatenate([[dt], dw])
    out = np.empty_like(X)
    active = np.arange(len(X))
    n = 1
    coarse = _rk4(model, X, coef, n)
    while len(active):
        n *= 2
        fine = _rk4(model, X[active], coef, n)
        if not np.all(np.isfinite(fine)) or np.max(np.abs(fine), initial=0.0) > BLOWUP_NORM:
            raise OdeDivergence(f"state norm exceeded {BLOWUP_NORM:g} in model {model.name!r}")
        err = np.max(np.abs(fine - coarse), axis=1)
        ok = err <= ode_tol * np.maximum(1.0, np.max(np.abs(fine), axis=1))
        if n >= MAX_SUBSTEPS:
            ok[:] = True
        out[active[ok]] = fine[ok]
        active, coarse = active[~ok], fine[~ok]
    return out


def transport(model: VectorFieldModel, X, path: BVPath, ode_tol: float = 1e-10) -> np.ndarray:
    """Endpoints of the controlled ODE along ``path`` from each row of ``X``."""
    if not ode_tol > 0:
        raise ValueError("ode_tol must be positive")
    X = np.array(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if path.d != model.driving_dim:
        raise ValueError(f"path is {path.d}-dimensional, model is driven by d={model.driving_dim}")
    for dt, dw in path.segments():
        X = _segment(model, X, float(dt), dw, ode_tol)
    return X


def solve_along_path(model: VectorFieldModel, x, path: BVPath, ode_tol: float = 1e-10) -> np.ndarray:
    """Endpoint ``Phi_{T,x}(omega)`` of the ODE driven by ``path`` from ``x``."""
    return transport(model, np.asarray(x, dtype=float).reshape(1, -1), path, ode_tol)[0]


def klv_transition(
    mu: ParticleMeasure,
    s: float,
    formula: WienerCubature,
    model: VectorFieldModel,
    ode_tol: float = 1e-10,
    threads: int = 1,
) -> ParticleMeasure:
    """One cubature step of length ``s``: every particle branches along every rescaled path.

    Output particle ``j * n + i`` is particle ``j`` moved along path ``i``
    with weight ``w_j * lambda_i``. The result does not depend on ``threads``.
    """
    if not s > 0:
        raise ValueError("step length must be positive")
    paths = rescale(formula, s)
    P, n = len(mu), len(paths)

    def run(rows: np.ndarray) -> np.ndarray:
        X = mu.points[rows]
        return np.stack([transport(model, X, path, ode_tol) for path in paths], axis=1)

    if threads > 1 and P > 1:
        chunks = [c for c in np.array_split(np.arange(P), threads) if len(c)]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            moved = np.concatenate(list(pool.map(run, chunks)), axis=0)
    else:
        moved = run(np.arange(P))
    weights = np.outer(mu.weights, formula.weights).reshape(-1)
    return ParticleMeasure(moved.reshape(P * n, mu.dim), weights)


# ---------------------------------------------------------------------------
# registry


def _norm_cdf(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def _constant_model(c=None) -> VectorFieldModel:
    C = np.array([[0.0], [1.0]] if c is None else c, dtype=float)
    if C.ndim != 2 or C.shape[0] < 2:
        raise ConfigError("constant model needs c = [V_0, V_1, ..., V_d] as vectors")
    N, d = C.shape[1], C.shape[0] - 1

    def fields(X):
        return np.broadcast_to(C, (len(X), d + 1, N)).copy()

    def exact(payoff, x0, T):
        mean = x0 + C[0] * T
        var = T * np.sum(C[1:] ** 2, axis=0)
        comp = int(payoff.params.get("component", 0))
        if payoff.name == "constant":
            return 1.0
        if payoff.name == "identity":
            return float(mean[comp])
        if payoff.name == "square":
            return float(mean[comp] ** 2 + var[comp])
        return None

    return VectorFieldModel("constant", N, d, fields, 1, float(np.max(np.linalg.norm(C, axis=1))),
                            exact, {"c": C.tolist()})


def _linear_model(A=None) -> VectorFieldModel:
    M = np.array([[[0.0]], [[1.0]]] if A is None else A, dtype=float)
    if M.ndim != 3 or M.shape[1] != M.shape[2] or M.shape[0] < 2:
        raise ConfigError("linear model needs A = [A_0, ..., A_d] as N x N matrices")
    N, d = M.shape[1], M.shape[0] - 1

    def fields(X):
        out = np.zeros((len(X), d + 1, N))
        # elementwise accumulation keeps results independent of batch size
        for i in range(d + 1):
            for k in range(N):
                out[:, i, :] += X[:, k, None] * M[i, :, k]
        return out

    def exact(payoff, x0, T):
        if N != 1:
            return None
        a0, a = M[0, 0, 0], M[1:, 0, 0]
        if payoff.name == "constant":
            return 1.0
        if payoff.name == "identity":
            return float(x0[0] * math.exp(a0 * T + 0.5 * T * np.sum(a**2)))
        if payoff.name == "square":
            return float(x0[0] ** 2 * math.exp(2 * a0 * T + 2 * T * np.sum(a**2)))
        return None

    return VectorFieldModel("linear", N, d, fields, 1, None, exact, {"A": M.tolist()})


def _gbm_model(sigma: float = 0.2, mu: float = 0.0) -> VectorFieldModel:
    """Black-Scholes ``dS = mu S dt + sigma S dW`` in Stratonovich form."""
    sigma, mu = float(sigma), float(mu)
    drift = mu - 0.5 * sigma**2

    def fields(X):
        out = np.empty((len(X), 2, 1))
        out[:, 0, 0] = drift * X[:, 0]
        out[:, 1, 0] = sigma * X[:, 0]
        return out

    def exact(payoff, x0, T):
        S = float(x0[0])
        fwd = S * math.exp(mu * T)
        if payoff.name == "constant":
            return 1.0
        if payoff.name == "identity":
            return fwd
        if payoff.name == "square":
            return S**2 * math.exp((2 * mu + sigma**2) * T)
        if payoff.name in ("call", "put"):
            K = float(payoff.params["K"])
            vol = sigma * math.sqrt(T)
            d1 = (math.log(S / K) + (mu + 0.5 * sigma**2) * T) / vol
            d2 = d1 - vol
            call = fwd * _norm_cdf(d1) - K * _norm_cdf(d2)
            return call if payoff.name == "call" else call - fwd + K
        return None

    return VectorFieldModel("gbm", 1, 1, fields, 1, None, exact, {"sigma": sigma, "mu": mu})


def _heisenberg_model() -> VectorFieldModel:
    """Hypoelliptic pair on R^2: ``V_1 = (1, 0)``, ``V_0 = (0, x_1)``.

    Only ``V_1`` is noise-driven; ``[V_1, V_0] = (0, 1)`` fills the missing
    direction, so the declared bracket depth is 3 (the bracket has degree 3).
    The solution is ``x_1 + B_t`` and ``x_2 + int_0^t (x_1 + B_s) ds``.
    """

    def fields(X):
        out = np.zeros((len(X), 2, 2))
        out[:, 0, 1] = X[:, 0]
        out[:, 1, 0] = 1.0
        return out

    def exact(payoff, x0, T):
        x1, x2 = float(x0[0]), float(x0[1])
        comp = int(payoff.params.get("component", 0))
        mean = (x1, x2 + x1 * T)
        var = (T, T**3 / 3.0)
        if payoff.name == "constant":
            return 1.0
        if payoff.name == "identity":
            return mean[comp]
        if payoff.name == "square":
            return mean[comp] ** 2 + var[comp]
        return None

    return VectorFieldModel("heisenberg", 2, 1, fields, 3, None, exact, {})


_REGISTRY = {
    "constant": _constant_model,
    "linear": _linear_model,
    "gbm": _gbm_model,
    "heisenberg": _heisenberg_model,
}


def make_model(name: str, **params) -> VectorFieldModel:
    """Build a registry model: ``constant``, ``linear``, ``gbm`` or ``heisenberg``."""
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise ConfigError(f"unknown model {name!r}; choose from {sorted(_REGISTRY)}") from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for model {name!r}: {exc}") from exc
