import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import moment_scale, raw_moments
from recombklv.localize import cover_support, reduce_localized
from recombklv.measure import ParticleMeasure
from recombklv.polybasis import basis_size


def test_line_example():
    mu = ParticleMeasure([0.0, 0.5, 3.0], [0.2, 0.3, 0.5])
    loc = cover_support(mu, 1.0)
    assert len(loc) == 2
    assert [p.indices.tolist() for p in loc.patches] == [[0, 1], [2]]
    np.testing.assert_allclose(loc.patches[0].center, [1.0])
    np.testing.assert_allclose(loc.patches[1].center, [3.0])


def test_single_cell_single_patch():
    rng = np.random.default_rng(0)
    mu = ParticleMeasure(rng.uniform(0.1, 0.5, size=(50, 2)), np.full(50, 0.02))
    assert len(cover_support(mu, 1.0)) == 1


@settings(max_examples=30, deadline=None)
@given(
    N=st.integers(1, 4),
    u=st.floats(0.05, 3.0),
    seed=st.integers(0, 2**32 - 1),
    center=st.sampled_from(["cell", "com"]),
)
def test_partition_and_containment(N, u, seed, center):
    rng = np.random.default_rng(seed)
    mu = ParticleMeasure(rng.normal(size=(200, N)) * 2, rng.random(200) + 0.1)
    loc = cover_support(mu, u, center)
    idx = np.concatenate([p.indices for p in loc.patches])
    assert sorted(idx.tolist()) == list(range(200))
    limit = u if center == "cell" else 2 * u
    for p in loc.patches:
        assert p.radius == u
        assert np.max(np.linalg.norm(mu.points[p.indices] - p.center, axis=1)) <= limit * (1 + 1e-12)
    mass = sum(mu.weights[p.indices].sum() for p in loc.patches)
    assert mass == pytest.approx(mu.weights.sum(), rel=1e-14)


def test_patch_count_bound():
    rng = np.random.default_rng(1)
    N, u = 2, 0.3
    X = rng.uniform(0, 2, size=(3000, N))
    loc = cover_support(ParticleMeasure(X, np.ones(3000)), u)
    D = 2 * math.sqrt(N)
    assert len(loc) <= (D / u * math.sqrt(N) / 2 + 1) ** N


def test_invalid_arguments():
    mu = ParticleMeasure([0.0, 1.0], [0.5, 0.5])
    with pytest.raises(ValueError):
        cover_support(mu, 0.0)
    with pytest.raises(ValueError):
        cover_support(mu, 1.0, "median")
    with pytest.raises(ValueError):
        reduce_localized(mu, 1.0, 0)


def test_single_patch_disk_example():
    rng = np.random.default_rng(2)
    ang, rad = rng.uniform(0, 2 * np.pi, 1000), np.sqrt(rng.random(1000))
    X = 0.99 * np.c_[rad * np.cos(ang), rad * np.sin(ang)]
    # shift the disk into one grid cell of side 2u/sqrt(2)
    u = 2.0
    c = np.array([u / math.sqrt(2)] * 2)
    mu = ParticleMeasure(X + c, np.full(1000, 1e-3))
    out, reports, index = reduce_localized(mu, u, 2, return_index=True)
    assert len(reports) == 1
    assert len(out) <= 6
    np.testing.assert_array_equal(out.points, mu.points[index])
    before = raw_moments(mu.points, mu.weights, 2, 2, c)
    after = raw_moments(out.points, out.weights, 2, 2, c)
    for e in before:
        assert after[e] == pytest.approx(before[e], abs=1e-12)


def test_tiny_radius_is_identity():
    rng = np.random.default_rng(3)
    mu = ParticleMeasure(rng.normal(size=(40, 2)), rng.random(40) + 0.1)
    out, reports = reduce_localized(mu, 1e-9, 2)
    assert len(out) == 40
    np.testing.assert_array_equal(np.sort(out.weights), np.sort(mu.weights))
    assert all(r.output_support == r.input_support for r in reports)


@pytest.mark.parametrize("r", [1, 2, 3])
@pytest.mark.parametrize("algorithm", ["alg1", "alg2"])
def test_per_patch_moments_and_support_bound(r, algorithm):
    rng = np.random.default_rng(r)
    N, u = 2, 0.4
    mu = ParticleMeasure(rng.uniform(-1, 1, size=(3000, N)), rng.random(3000) + 0.1)
    out, reports, index = reduce_localized(mu, u, r, algorithm, return_index=True)
    loc = cover_support(mu, u)
    assert len(out) <= len(loc) * (basis_size(N, r) + 1)
    assert out.weights.sum() == pytest.approx(mu.weights.sum(), rel=1e-12)
    keep = set(index.tolist())
    for p in loc.patches:
        sub = [i for i in p.indices if i in keep]
        pos = [int(np.flatnonzero(index == i)[0]) for i in sub]
        before = raw_moments(mu.points[p.indices], mu.weights[p.indices], N, r, p.center)
        after = raw_moments(out.points[pos], out.weights[pos], N, r, p.center)
        scale = moment_scale(mu.points[p.indices], mu.weights[p.indices], N, r, p.center)
        for e in before:
            assert abs(after[e] - before[e]) <= 1e-8 * scale[e]


@pytest.mark.parametrize("threads", [2, 4])
def test_threads_do_not_change_result(threads):
    rng = np.random.default_rng(4)
    mu = ParticleMeasure(rng.normal(size=(2000, 2)), rng.random(2000) + 0.1)
    a, _, ia = reduce_localized(mu, 0.5, 2, return_index=True)
    b, _, ib = reduce_localized(mu, 0.5, 2, threads=threads, return_index=True)
    assert np.array_equal(ia, ib)
    assert np.array_equal(a.weights, b.weights)


def scaled_error(g, Z, w, u, r):
    mu = ParticleMeasure(u * Z, w)
    out, _ = reduce_localized(mu, u, r)
    return abs(out.integrate(g) - mu.integrate(g))


@pytest.mark.parametrize("g", [
    lambda X: np.exp(X[:, 0]),
    lambda X: np.sin(X[:, 0] + X[:, 1]),
], ids=["exp", "sin"])
@pytest.mark.parametrize("r", [1, 2, 3])
def test_error_order(g, r):
    # cloud kept inside the radius-u ball as u shrinks, as in the Taylor remainder bound
    ratios = []
    for trial in range(20):
        rng = np.random.default_rng(100 + trial)
        Z, w = rng.uniform(-1, 1, size=(1000, 2)), rng.random(1000) + 0.1
        ratios.append(scaled_error(g, Z, w, 0.5, r) / scaled_error(g, Z, w, 0.25, r))
    assert 2.0**r <= np.median(ratios) <= 2.0 ** (r + 2)
