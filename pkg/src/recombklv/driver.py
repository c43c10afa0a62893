"""Iterated cubature with and without recombination, and convergence studies."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from recombklv.cubature import WienerCubature, get_formula
from recombklv.errors import ConfigError, RecombError, TreeTooLarge
from recombklv.localize import reduce_localized
from recombklv.measure import ParticleMeasure
from recombklv.polybasis import basis_size
from recombklv.sde import Payoff, VectorFieldModel, klv_transition, make_model, make_payoff

VANILLA_GUARD = 10**7
RADIUS_RULES = ("example1", "example2", "fixed", "none")


@dataclass
class RunConfig:
    model: str = "gbm"
    model_params: dict = field(default_factory=dict)
    payoff: str = "call"
    payoff_params: dict = field(default_factory=lambda: {"K": 1.0})
    x0: list = field(default_factory=lambda: [1.0])
    T: float = 1.0
    k: int = 8
    gamma: float = 4.0
    cubature: str = "degree3"
    r: int = 3
    radius_rule: str = "example1"
    u: float | None = None
    p: int | None = None
    ode_tol: float = 1e-10
    seed: int | None = None
    threads: int = 1
    algorithm: str = "alg2"
    skip_unprofitable: bool = False
    recombine_first_last: bool = False

    def __post_init__(self):
        if not self.T > 0:
            raise ConfigError("T must be positive")
        if int(self.k) != self.k or self.k < 1:
            raise ConfigError("k must be a positive integer")
        if not self.gamma > 0:
            raise ConfigError("gamma must be positive")
        if self.r < 1:
            raise ConfigError("reduction degree r must be >= 1")
        if self.radius_rule not in RADIUS_RULES:
            raise ConfigError(f"radius_rule must be one of {RADIUS_RULES}")
        if self.radius_rule == "fixed" and not (self.u is not None and self.u > 0):
            raise ConfigError("radius_rule 'fixed' needs a positive u")
        if self.recombine_first_last:
            raise ConfigError("recombination after the first and last step is not supported")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        self.k = int(self.k)
        self.x0 = [float(v) for v in np.atleast_1d(self.x0)]

    @classmethod
    def from_dict(cls, data: dict) -> RunConfig:
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> RunConfig:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict:
        return asdict(self)

    def build(self) -> tuple[VectorFieldModel, Payoff, WienerCubature]:
        model = make_model(self.model, **self.model_params)
        if len(self.x0) != model.state_dim:
            raise ConfigError(f"x0 has {len(self.x0)} coordinates, model state is R^{model.state_dim}")
        payoff = make_payoff(self.payoff, **self.payoff_params)
        formula = get_formula(self.cubature, model.driving_dim)
        return model, payoff, formula

    def hormander_step(self, model: VectorFieldModel) -> int:
        return int(self.p) if self.p is not None else model.hormander_step


@dataclass
class StepDiagnostics:
    step: int
    s: float
    u: float | None
    particles_before: int
    particles_after: int
    patches: int
    wall_time: float
    ode_solves: int

    def row(self) -> dict:
        return {
            "step": self.step,
            "s_j": self.s,
            "u_j": "" if self.u is None else self.u,
            "particles_before": self.particles_before,
            "particles_after": self.particles_after,
            "patches": self.patches,
            "wall_ms": round(1000 * self.wall_time, 3),
        }


def make_partition(T: float, k: int, gamma: float) -> tuple[np.ndarray, np.ndarray]:
    """Times ``t_j = T (1 - (1 - j/k)^gamma)`` and steps ``s_j = t_j - t_{j-1}``.

    ``s`` is returned with a leading 0 so that ``s[j]`` is the j-th step.
    """
    if k < 1 or not gamma > 0 or not T > 0:
        raise ValueError("need k >= 1, gamma > 0, T > 0")
    j = np.arange(k + 1)
    t = T * (1.0 - (1.0 - j / k) ** gamma)
    t[0], t[-1] = 0.0, T
    s = np.concatenate([[0.0], np.diff(t)])
    return t, s


def radius_schedule_example1(s, p: int, m: int) -> dict[int, float]:
    """``u_j = s_j^(p/2 - a)``, ``a = (p - 1) / (2 (ceil(m/p) + 1))``, interior steps only."""
    if p < 1 or m < 1:
        raise ValueError("p and m must be >= 1")
    a = (p - 1) / (2 * (math.ceil(m / p) + 1))
    k = len(s) - 1
    return {j: float(s[j]) ** (p / 2 - a) for j in range(2, k)}


def radius_schedule_example2(s, t, T: float, m: int, r: int, p: int) -> dict[int, float]:
    """Radii balancing reduction and cubature error; requires ``m == r``."""
    if m != r:
        raise ConfigError(f"this schedule needs the reduction degree to equal the cubature degree (m={m}, r={r})")
    k = len(s) - 1
    out = {}
    for j in range(2, k):
        rest = T - float(t[j])
        if not rest > 0:
            raise ConfigError("interior times must be strictly before T")
        out[j] = (float(s[j]) ** (m + 1) / rest ** (m - r * p)) ** (1.0 / (2 * (r + 1)))
    return out


def cost_model(D: float, delta: float, N: int, r: int, n_hat: int) -> float:
    """Operation count ``(D/delta)^N C(r+N,N)^4 log2(n_hat) + n_hat C(r+N,N)``."""
    b = math.comb(r + N, N)
    return (D / delta) ** N * b**4 * math.log2(n_hat) + n_hat * b


def delta_for_error(eps: float, r: int, c: float) -> float:
    """Patch radius giving error ``eps`` for a degree-r reduction with derivative bound ``c``."""
    return (eps * math.factorial(r + 1) / c) ** (1.0 / (r + 1))


def _radii(config: RunConfig, s, t, m: int, p: int) -> dict[int, float] | None:
    rule = config.radius_rule
    if rule == "none":
        return None
    if rule == "example1":
        return radius_schedule_example1(s, p, m)
    if rule == "example2":
        return radius_schedule_example2(s, t, config.T, m, config.r, p)
    return {j: float(config.u) for j in range(2, config.k)}


def _diameter(mu: ParticleMeasure) -> float:
    return float(np.linalg.norm(mu.points.max(axis=0) - mu.points.min(axis=0)))


def _check_stage(mu: ParticleMeasure, step: int) -> None:
    mass = float(np.sum(mu.weights))
    if not (np.all(mu.weights > 0) and abs(mass - 1.0) <= 1e-10):
        raise RecombError(f"step {step}: measure lost positivity or unit mass (mass={mass!r})")


def _iterate(config: RunConfig, radii_enabled: bool):
    model, payoff, formula = config.build()
    t, s = make_partition(config.T, config.k, config.gamma)
    p = config.hormander_step(model)
    radii = _radii(config, s, t, formula.m, p) if radii_enabled else None
    n_paths = len(formula)
    mu = ParticleMeasure(np.array([config.x0]), [1.0])
    diagnostics = []
    for j in range(1, config.k + 1):
        start = time.perf_counter()
        try:
            mu = klv_transition(mu, float(s[j]), formula, model, config.ode_tol, config.threads)
        except RecombError as exc:
            raise type(exc)(f"step {j}: {exc}") from exc
        before = len(mu)
        u, patches = None, 0
        if radii is not None and j in radii:
            u = radii[j]
            if config.radius_rule == "example2":
                diam = _diameter(mu)
                if diam > 0:
                    u = min(u, diam)
            if config.skip_unprofitable and _reduction_unprofitable(mu, u, config.r, n_paths):
                u = None
            else:
                try:
                    reduced, reports, index = reduce_localized(
                        mu, u, config.r, config.algorithm, threads=config.threads, return_index=True
                    )
                except RecombError as exc:
                    raise type(exc)(f"step {j}: {exc}") from exc
                # recombination never moves a particle
                if not np.array_equal(reduced.points, mu.points[index]):
                    raise RecombError(f"step {j}: reduced support is not a subset")
                mu, patches = reduced, len(reports)
        _check_stage(mu, j)
        diagnostics.append(
            StepDiagnostics(j, float(s[j]), u, before, len(mu), patches,
                            time.perf_counter() - start, before)
        )
    estimate = math.fsum(mu.weights * payoff(mu.points))
    return estimate, diagnostics, mu


def _reduction_unprofitable(mu: ParticleMeasure, u: float, r: int, n_paths: int) -> bool:
    n_hat = len(mu)
    if n_hat < 2:
        return True
    D = max(_diameter(mu), u)
    return cost_model(D, u, mu.dim, r, n_hat) > n_hat * n_paths


def run_recombining_klv(config: RunConfig) -> tuple[float, list[StepDiagnostics]]:
    """Cubature steps over the partition, recombining after steps 2..k-1."""
    estimate, diagnostics, _ = _iterate(config, radii_enabled=True)
    return estimate, diagnostics


def run_vanilla_klv(config: RunConfig) -> tuple[float, list[StepDiagnostics]]:
    """The full cubature tree without recombination.

    Each step's ``ode_solves`` counts the branch solves; the tree's total ODE
    count including the root node is ``1 + sum ode_solves = (n^(k+1)-1)/(n-1)``.
    """
    _, _, formula = config.build()
    n = len(formula)
    if n ** config.k > VANILLA_GUARD:
        raise TreeTooLarge(f"{n}^{config.k} particles exceed the guard {VANILLA_GUARD:g}")
    estimate, diagnostics, _ = _iterate(replace(config, radius_rule="none"), radii_enabled=False)
    for d in diagnostics:
        if d.particles_after != n ** d.step:
            raise RecombError(f"step {d.step}: {d.particles_after} particles, expected {n ** d.step}")
    return estimate, diagnostics


def tree_ode_count(diagnostics: list[StepDiagnostics]) -> int:
    """Tree nodes solved for, counting the starting point as the root."""
    return 1 + sum(d.ode_solves for d in diagnostics)


def diagnostics_csv(diagnostics: list[StepDiagnostics]) -> str:
    buf = io.StringIO()
    fields = ["step", "s_j", "u_j", "particles_before", "particles_after", "patches", "wall_ms"]
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    for d in diagnostics:
        writer.writerow(d.row())
    return buf.getvalue()


@dataclass
class ConvergenceRow:
    k: int
    estimate: float
    abs_error: float
    max_particles: int
    vanilla_estimate: float | None = None
    vanilla_error: float | None = None
    wall_time: float = 0.0


@dataclass
class ConvergenceTable:
    rows: list[ConvergenceRow]
    exact: float
    slope_fit: float
    vanilla_slope_fit: float | None

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["k", "estimate", "abs_error", "slope_fit", "max_particles",
                         "vanilla_estimate", "vanilla_error"])
        for row in self.rows:
            writer.writerow([
                row.k, repr(row.estimate), repr(row.abs_error), repr(self.slope_fit),
                row.max_particles,
                "" if row.vanilla_estimate is None else repr(row.vanilla_estimate),
                "" if row.vanilla_error is None else repr(row.vanilla_error),
            ])
        return buf.getvalue()


def fit_loglog_slope(ks, errors) -> float:
    """Least-squares slope of ``log(error)`` against ``log(k)``."""
    ks, errors = np.asarray(ks, dtype=float), np.asarray(errors, dtype=float)
    if len(ks) < 2 or np.any(errors <= 0):
        return float("nan")
    return float(np.polyfit(np.log(ks), np.log(errors), 1)[0])


def convergence_study(config: RunConfig, k_list, vanilla_limit: int = 10**6) -> ConvergenceTable:
    """Recombining (and, where the tree is small enough, vanilla) runs over ``k_list``."""
    model, payoff, formula = config.build()
    exact = model.exact_expectation(payoff, config.x0, config.T)
    if exact is None:
        raise ConfigError(f"model {config.model!r} has no closed form for payoff {config.payoff!r}")
    n = len(formula)
    rows = []
    for k in k_list:
        cfg = replace(config, k=int(k))
        start = time.perf_counter()
        est, diag = run_recombining_klv(cfg)
        row = ConvergenceRow(int(k), est, abs(est - exact),
                             max(d.particles_before for d in diag),
                             wall_time=time.perf_counter() - start)
        if n ** int(k) <= vanilla_limit:
            v_est, _ = run_vanilla_klv(cfg)
            row.vanilla_estimate, row.vanilla_error = v_est, abs(v_est - exact)
        rows.append(row)
    slope = fit_loglog_slope([r.k for r in rows], [r.abs_error for r in rows])
    vrows = [r for r in rows if r.vanilla_error is not None]
    vslope = fit_loglog_slope([r.k for r in vrows], [r.vanilla_error for r in vrows]) if len(vrows) >= 2 else None
    return ConvergenceTable(rows, exact, slope, vslope)
