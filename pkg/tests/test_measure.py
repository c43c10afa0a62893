import numpy as np
import pytest

from recombklv.measure import (
    ParticleMeasure,
    center_of_mass,
    merge_duplicates,
    pushforward_by_basis,
    read_particles_csv,
    total_mass,
    write_particles_csv,
)
from recombklv.polybasis import build_basis


def test_one_dimensional_points_are_columns():
    mu = ParticleMeasure([0.0, 1.0, 2.0], [0.2, 0.3, 0.5])
    assert mu.points.shape == (3, 1)
    assert mu.dim == 1
    assert len(mu) == 3


def test_zero_weights_dropped():
    mu = ParticleMeasure([[0.0], [1.0], [2.0]], [0.5, 0.0, 0.5])
    assert len(mu) == 2
    assert np.all(mu.weights > 0)


@pytest.mark.parametrize("weights", [[-0.1, 1.1], [np.nan, 1.0], [0.0, 0.0]])
def test_bad_weights_rejected(weights):
    with pytest.raises(ValueError):
        ParticleMeasure([[0.0], [1.0]], weights)


def test_length_mismatch():
    with pytest.raises(ValueError):
        ParticleMeasure(np.zeros((3, 2)), [1.0, 1.0])


def test_arrays_read_only():
    mu = ParticleMeasure(np.zeros((2, 2)), [0.5, 0.5])
    with pytest.raises(ValueError):
        mu.weights[0] = 3.0


def test_mass_and_center():
    mu = ParticleMeasure([[0.0, 0.0], [2.0, 4.0]], [1.0, 3.0])
    assert total_mass(mu) == 4.0
    np.testing.assert_allclose(center_of_mass(mu), [1.5, 3.0])


def test_integrate():
    mu = ParticleMeasure([[1.0], [2.0]], [0.25, 0.75])
    assert mu.integrate(lambda X: X[:, 0] ** 2) == pytest.approx(0.25 + 3.0)


def test_pushforward_rows_are_evaluations():
    rng = np.random.default_rng(1)
    mu = ParticleMeasure(rng.normal(size=(7, 2)), rng.random(7) + 0.1)
    basis = build_basis(2, 2)
    img, index = pushforward_by_basis(mu, basis)
    assert img.dim == basis.size
    np.testing.assert_array_equal(index, np.arange(7))
    np.testing.assert_allclose(img.points[3], basis.evaluate(mu.points[3]))
    np.testing.assert_array_equal(img.weights, mu.weights)


def test_merge_exact_duplicates():
    mu = ParticleMeasure([[1.0], [0.0], [1.0], [2.0], [0.0]], [0.1, 0.2, 0.3, 0.15, 0.25])
    merged, reps = merge_duplicates(mu, return_index=True)
    assert len(merged) == 3
    # representatives are first occurrences, in order of first appearance
    np.testing.assert_array_equal(reps, [0, 1, 3])
    np.testing.assert_allclose(merged.weights, [0.4, 0.45, 0.15])
    assert total_mass(merged) == pytest.approx(total_mass(mu), abs=1e-15)


def test_merge_with_tolerance():
    mu = ParticleMeasure([[0.0], [1e-9], [1.0]], [0.3, 0.3, 0.4])
    assert len(merge_duplicates(mu, tol=1e-6)) == 2
    assert len(merge_duplicates(mu, tol=0.0)) == 3


def test_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(2)
    mu = ParticleMeasure(rng.normal(size=(5, 3)), rng.random(5) + 0.01)
    path = tmp_path / "mu.csv"
    write_particles_csv(mu, path)
    text = path.read_bytes()
    assert text.startswith(b"x1,x2,x3,weight\n")
    assert b"\r" not in text
    back = read_particles_csv(path)
    np.testing.assert_array_equal(back.points, mu.points)
    np.testing.assert_array_equal(back.weights, mu.weights)


def test_csv_rejects_nonpositive_weight(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x1,weight\n0.0,0.5\n1.0,0\n")
    with pytest.raises(ValueError):
        read_particles_csv(path)
