import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import monomial_exponents
from recombklv.polybasis import MonomialBasis, basis_size, build_basis


@pytest.mark.parametrize("N", range(1, 11))
@pytest.mark.parametrize("r", range(0, 7))
def test_size_matches_enumeration(N, r):
    if (r + 1) ** N > 2e4:
        # brute-force box enumeration is too large; use the count of compositions
        expected = sum(math.comb(k + N - 1, N - 1) for k in range(1, r + 1))
    else:
        expected = len(monomial_exponents(N, r))
    assert basis_size(N, r) == expected
    if N <= 6 and r <= 4:
        assert build_basis(N, r).size == expected


def test_graded_order_two_variables():
    basis = build_basis(2, 2)
    assert basis.exponents == ((1, 0), (0, 1), (2, 0), (1, 1), (0, 2))


def test_exponents_are_distinct_and_complete():
    basis = build_basis(3, 3)
    assert sorted(basis.exponents) == sorted(monomial_exponents(3, 3))


@settings(max_examples=40, deadline=None)
@given(
    N=st.integers(1, 4),
    r=st.integers(1, 4),
    seed=st.integers(0, 2**32 - 1),
    scale=st.floats(0.1, 10.0),
)
def test_evaluation_matches_direct_products(N, r, seed, scale):
    rng = np.random.default_rng(seed)
    center = rng.normal(size=N)
    X = rng.normal(size=(6, N))
    basis = build_basis(N, r, center, scale)
    got = basis.evaluate_many(X)
    Y = (X - center) / scale
    want = np.stack([np.prod(Y ** np.array(e), axis=1) for e in basis.exponents], axis=1)
    np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)


def test_scalar_center_broadcasts():
    basis = build_basis(3, 1, center=2.0)
    np.testing.assert_array_equal(basis.center, [2.0, 2.0, 2.0])
    np.testing.assert_allclose(basis.evaluate([3.0, 2.0, 1.0]), [1.0, 0.0, -1.0])


@pytest.mark.parametrize("kwargs", [
    dict(dimension=0, degree=1, center=[0.0], scale=1.0),
    dict(dimension=2, degree=1, center=[0.0, 0.0], scale=0.0),
    dict(dimension=2, degree=1, center=[0.0, 0.0, 0.0], scale=1.0),
    dict(dimension=2, degree=-1, center=[0.0, 0.0], scale=1.0),
])
def test_invalid_bases(kwargs):
    with pytest.raises(ValueError):
        MonomialBasis(**kwargs)
