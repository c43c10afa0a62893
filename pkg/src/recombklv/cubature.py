"""Cubature formulas on Wiener space built from piecewise-linear paths.

Paths live in R^{1+d}: coordinate 0 is time, coordinates 1..d the Brownian
components. Signatures are stored densely level by level, level ``k`` being an
array of shape ``(d+1,) * k`` indexed by words over ``{0, ..., d}``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from recombklv.errors import DegreeCheckFailed, ParseError, UnsupportedDepth

MAX_BM_DEGREE = 8


def word_degree(word) -> int:
    """Length of the word plus the number of time letters (time counts twice)."""
    return len(word) + sum(1 for a in word if a == 0)


def _degree_array(D: int, k: int) -> np.ndarray:
    deg = np.full((D,) * k, k, dtype=int)
    for axis in range(k):
        shape = [1] * k
        shape[axis] = D
        deg = deg + (np.arange(D) == 0).reshape(shape)
    return deg


@dataclass(frozen=True, eq=False)
class BVPath:
    """Piecewise-linear path given by segment durations and spatial increments."""

    durations: np.ndarray
    increments: np.ndarray

    def __post_init__(self):
        durations = np.array(self.durations, dtype=float).reshape(-1)
        increments = np.array(self.increments, dtype=float)
        if increments.ndim == 1:
            increments = increments.reshape(len(durations), -1)
        if increments.shape[0] != len(durations) or len(durations) == 0:
            raise ValueError("need one spatial increment per segment and at least one segment")
        if np.any(durations <= 0) or not np.all(np.isfinite(durations)):
            raise ValueError("segment durations must be positive and finite")
        if not np.all(np.isfinite(increments)):
            raise ValueError("increments must be finite")
        durations.setflags(write=False)
        increments.setflags(write=False)
        object.__setattr__(self, "durations", durations)
        object.__setattr__(self, "increments", increments)

    @property
    def d(self) -> int:
        return self.increments.shape[1]

    @property
    def total_duration(self) -> float:
        return float(np.sum(self.durations))

    @property
    def length(self) -> float:
        """Total variation of the spatial part."""
        return float(np.sum(np.linalg.norm(self.increments, axis=1)))

    def segments(self):
        """Yield ``(duration, increment)`` pairs in path order."""
        return zip(self.durations, self.increments)

    def concatenate(self, other: BVPath) -> BVPath:
        return BVPath(
            np.concatenate([self.durations, other.durations]),
            np.vstack([self.increments, other.increments]),
        )

    def __eq__(self, other):
        if not isinstance(other, BVPath):
            return NotImplemented
        return (
            self.durations.shape == other.durations.shape
            and self.increments.shape == other.increments.shape
            and np.array_equal(self.durations, other.durations)
            and np.array_equal(self.increments, other.increments)
        )


class TruncatedSignature:
    """Tensor-algebra element truncated at word length ``depth``."""

    def __init__(self, levels: list[np.ndarray]):
        self.levels = [np.asarray(lv, dtype=float) for lv in levels]
        self.depth = len(levels) - 1
        self.D = self.levels[1].shape[0] if self.depth >= 1 else 1

    @classmethod
    def unit(cls, D: int, depth: int) -> TruncatedSignature:
        levels = [np.array(1.0)] + [np.zeros((D,) * k) for k in range(1, depth + 1)]
        return cls(levels)

    @classmethod
    def segment(cls, vector, depth: int) -> TruncatedSignature:
        """Signature of a straight segment: ``v^{(x)k} / k!`` at level ``k``."""
        v = np.asarray(vector, dtype=float)
        levels = [np.array(1.0)]
        for k in range(1, depth + 1):
            levels.append(np.multiply.outer(levels[-1], v) / k)
        return cls(levels)

    def __getitem__(self, word) -> float:
        word = tuple(word)
        return float(self.levels[len(word)][word]) if word else float(self.levels[0])

    def __matmul__(self, other: TruncatedSignature) -> TruncatedSignature:
        depth = min(self.depth, other.depth)
        levels = []
        for k in range(depth + 1):
            acc = np.zeros((self.D,) * k)
            for i in range(k + 1):
                acc = acc + np.multiply.outer(self.levels[i], other.levels[k - i])
            levels.append(acc)
        return TruncatedSignature(levels)

    def __add__(self, other: TruncatedSignature) -> TruncatedSignature:
        return TruncatedSignature([a + b for a, b in zip(self.levels, other.levels)])

    def __mul__(self, c: float) -> TruncatedSignature:
        return TruncatedSignature([c * a for a in self.levels])

    __rmul__ = __mul__

    def truncate(self, depth: int) -> TruncatedSignature:
        return TruncatedSignature(self.levels[: depth + 1])

    def words(self, max_degree: int | None = None):
        """Yield every word (as a tuple) of length <= depth, optionally with degree <= max_degree."""
        for k in range(self.depth + 1):
            for idx in np.ndindex(*(self.D,) * k):
                if max_degree is None or word_degree(idx) <= max_degree:
                    yield tuple(int(a) for a in idx)

    def scaled(self, T: float) -> TruncatedSignature:
        """Multiply the coefficient of each word by ``T ** (degree / 2)``."""
        return TruncatedSignature(
            [lv * np.sqrt(T) ** _degree_array(self.D, k) for k, lv in enumerate(self.levels)]
        )


def signature(path: BVPath, depth: int) -> TruncatedSignature:
    """Truncated signature of the time-augmented path ``(t, omega)``."""
    if depth < 1:
        raise ValueError("depth must be >= 1")
    sig = None
    for dt, dw in path.segments():
        seg = TruncatedSignature.segment(np.concatenate([[dt], dw]), depth)
        sig = seg if sig is None else sig @ seg
    return sig


def bm_expected_iterated_integrals(d: int, m: int, T: float = 1.0) -> TruncatedSignature:
    """Expected Stratonovich signature of ``(t, B_t)`` over ``[0, T]`` for words of degree <= m.

    Computed at ``T = 1`` as the truncated tensor exponential of
    ``e_0 + 1/2 sum_i e_i e_i`` and then scaled word by word with
    ``T ** (degree / 2)``. Entries of degree above ``m`` are set to zero.
    """
    if m > MAX_BM_DEGREE:
        raise UnsupportedDepth(f"degree {m} exceeds the supported maximum {MAX_BM_DEGREE}")
    if m < 1 or d < 1:
        raise ValueError("need d >= 1 and m >= 1")
    if not T > 0:
        raise ValueError("T must be positive")
    D = d + 1
    gen = TruncatedSignature.unit(D, m)
    gen.levels[0] = np.array(0.0)
    gen.levels[1][0] = 1.0
    if m >= 2:
        for i in range(1, D):
            gen.levels[2][i, i] = 0.5
    result = TruncatedSignature.unit(D, m)
    power = TruncatedSignature.unit(D, m)
    for k in range(1, m + 1):
        power = power @ gen
        result = result + power * (1.0 / math.factorial(k))
    for k in range(m + 1):
        result.levels[k][_degree_array(D, k) > m] = 0.0
    return result.scaled(T) if T != 1.0 else result


@dataclass
class CubatureCheck:
    max_abs_deviation: float
    worst_word: tuple
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_abs_deviation <= self.tol


def expected_signature(paths, weights, depth: int) -> TruncatedSignature:
    total = None
    for lam, path in zip(weights, paths):
        term = signature(path, depth) * float(lam)
        total = term if total is None else total + term
    return total


def _check(d: int, m: int, paths, weights, tol: float) -> CubatureCheck:
    target = bm_expected_iterated_integrals(d, m)
    got = expected_signature(paths, weights, m)
    worst, worst_word = -1.0, ()
    for k in range(m + 1):
        deg = _degree_array(d + 1, k)
        dev = np.abs(got.levels[k] - target.levels[k])
        dev = np.where(deg <= m, dev, -1.0)
        if dev.size and dev.max() > worst:
            worst = float(dev.max())
            flat = int(np.argmax(dev))
            worst_word = tuple(int(a) for a in np.unravel_index(flat, dev.shape)) if k else ()
    return CubatureCheck(worst, worst_word, tol)


class WienerCubature:
    """Weights and unit-time paths matching Brownian iterated integrals up to degree ``m``.

    Construction verifies the degree at ``tol`` and raises
    :class:`DegreeCheckFailed` otherwise; pass ``check=False`` to skip this
    (for example to inspect a broken formula with :func:`verify_cubature`).
    """

    def __init__(self, d: int, m: int, paths, weights, tol: float = 1e-10, check: bool = True):
        self.d = int(d)
        self.m = int(m)
        self.paths = list(paths)
        self.weights = np.array(weights, dtype=float).reshape(-1)
        self.weights.setflags(write=False)
        if len(self.paths) != len(self.weights):
            raise ValueError("one weight per path")
        if any(p.d != self.d for p in self.paths):
            raise ValueError(f"all paths must be {self.d}-dimensional")
        if check:
            if np.any(self.weights <= 0):
                raise DegreeCheckFailed("weights must be positive")
            for p in self.paths:
                if abs(p.total_duration - 1.0) > 1e-12:
                    raise DegreeCheckFailed("paths must have unit duration")
            result = _check(self.d, self.m, self.paths, self.weights, tol)
            if not result.passed:
                raise DegreeCheckFailed(
                    f"deviation {result.max_abs_deviation:.3e} at word {result.worst_word} "
                    f"exceeds {tol:g} for declared degree {self.m}"
                )

    def __len__(self) -> int:
        return len(self.paths)

    def __eq__(self, other):
        if not isinstance(other, WienerCubature):
            return NotImplemented
        return (
            self.d == other.d
            and self.m == other.m
            and np.array_equal(self.weights, other.weights)
            and self.paths == other.paths
        )

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "m": self.m,
            "weights": [float(w) for w in self.weights],
            "paths": [
                [[float(dt), [float(x) for x in dw]] for dt, dw in p.segments()]
                for p in self.paths
            ],
        }


def verify_cubature(formula: WienerCubature, tol: float = 1e-10) -> CubatureCheck:
    """Largest deviation from the Brownian expected signature over words of degree <= m."""
    return _check(formula.d, formula.m, formula.paths, formula.weights, tol)


def degree3_formula(d: int) -> WienerCubature:
    """The 2d straight-line paths with increments ``+-sqrt(d) e_i``, equal weights."""
    if d < 1:
        raise ValueError("d must be >= 1")
    paths = []
    for i in range(d):
        for sign in (1.0, -1.0):
            inc = np.zeros(d)
            inc[i] = sign * math.sqrt(d)
            paths.append(BVPath([1.0], [inc]))
    return WienerCubature(d, 3, paths, np.full(2 * d, 1.0 / (2 * d)))


def rescale(formula: WienerCubature, T: float) -> list[BVPath]:
    """Paths of the formula run over ``[0, T]``: durations times T, increments times sqrt(T)."""
    if not T > 0:
        raise ValueError("T must be positive")
    root = math.sqrt(T)
    return [BVPath(p.durations * T, p.increments * root) for p in formula.paths]


def parse_formula(data: dict, tol: float = 1e-8) -> WienerCubature:
    try:
        d = int(data["d"])
        m = int(data["m"])
        weights = [float(w) for w in data["weights"]]
        raw_paths = data["paths"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed cubature formula: {exc}") from exc
    if d < 1 or m < 1:
        raise ParseError("d and m must be positive")
    if any(not (w > 0) for w in weights):
        raise ParseError("weights must be strictly positive")
    if len(raw_paths) != len(weights):
        raise ParseError(f"{len(weights)} weights but {len(raw_paths)} paths")
    paths = []
    for n, segs in enumerate(raw_paths):
        try:
            durations = [float(seg[0]) for seg in segs]
            increments = [[float(x) for x in seg[1]] for seg in segs]
        except (TypeError, ValueError, IndexError) as exc:
            raise ParseError(f"path {n}: malformed segment list") from exc
        if not durations or any(len(inc) != d for inc in increments):
            raise ParseError(f"path {n}: every segment needs a {d}-vector increment")
        if any(not (t > 0) for t in durations):
            raise ParseError(f"path {n}: durations must be positive")
        if abs(sum(durations) - 1.0) > 1e-12:
            raise ParseError(f"path {n}: durations sum to {sum(durations)!r}, not 1")
        paths.append(BVPath(durations, increments))
    return WienerCubature(d, m, paths, weights, tol=tol)


def load_formula(file, tol: float = 1e-8) -> WienerCubature:
    """Read a formula from JSON; raises ParseError or DegreeCheckFailed."""
    try:
        text = Path(file).read_text(encoding="utf-8")
        data = json.loads(text)
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read cubature formula {file}: {exc}") from exc
    if not isinstance(data, dict):
        raise ParseError("cubature formula must be a JSON object")
    return parse_formula(data, tol)


def dump_formula(formula: WienerCubature, file) -> None:
    Path(file).write_text(json.dumps(formula.to_dict(), indent=2) + "\n", encoding="utf-8")


def get_formula(source: str, d: int) -> WienerCubature:
    """Registry lookup (``"degree3"``) or a path to a formula file."""
    if source in ("degree3", "deg3"):
        return degree3_formula(d)
    formula = load_formula(source)
    if formula.d != d:
        raise ParseError(f"formula is for d={formula.d}, model needs d={d}")
    return formula
