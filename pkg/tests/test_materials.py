import numpy as np
import pytest

from maxray.errors import WeightError
from maxray.lattice import cubic_lattice, square_lattice
from maxray.materials import (
    MaterialWeights,
    assemble,
    make_homogeneous,
    make_rod_lattice,
    rod_profile,
    vacuum,
    validate_weights,
)

# --- Fixtures ---


@pytest.fixture
def rods():
    return make_rod_lattice(square_lattice(), 0.2, 8.9, 1.0, 0.02, 16)


# --- 1. Homogeneous media ---


def test_vacuum_is_identity():
    w = vacuum()
    assert w.homogeneous and w.is_real
    assert w.shape == (1, 1)
    np.testing.assert_allclose(w.samples[0, 0], np.eye(6))


def test_homogeneous_blocks():
    w = make_homogeneous(2.0, 3.0, lattice=cubic_lattice())
    block = w.samples[0, 0, 0]
    np.testing.assert_allclose(np.diag(block).real, [2, 2, 2, 3, 3, 3])


def test_assemble_rejects_bad_block():
    with pytest.raises(WeightError):
        assemble(np.ones((2, 2)))


def test_gyrotropic_is_complex():
    eps = 2.0 * np.eye(3, dtype=complex)
    eps[0, 1], eps[1, 0] = 0.5j, -0.5j
    w = make_homogeneous(eps)
    assert not w.is_real
    assert validate_weights(w).passed


def test_conjugate_flips_gyration():
    eps = 2.0 * np.eye(3, dtype=complex)
    eps[0, 1], eps[1, 0] = 0.5j, -0.5j
    w = make_homogeneous(eps).conjugate()
    assert w.samples[0, 0, 0, 1] == pytest.approx(-0.5j)


# --- 2. Validation ---


def test_non_hermitian_rejected():
    samples = np.eye(6, dtype=complex).reshape(1, 1, 6, 6).copy()
    samples[0, 0, 0, 1] = 0.3
    with pytest.raises(WeightError, match="hermitian"):
        MaterialWeights.from_samples(square_lattice(), samples)


def test_indefinite_rejected():
    samples = np.eye(6, dtype=complex).reshape(1, 1, 6, 6).copy()
    samples[0, 0, 2, 2] = -1.0
    with pytest.raises(WeightError, match="positive definite"):
        MaterialWeights.from_samples(square_lattice(), samples)


def test_wrong_shape_rejected():
    with pytest.raises(WeightError):
        MaterialWeights.from_samples(square_lattice(), np.ones((4, 6, 6)))


def test_non_finite_rejected():
    samples = np.eye(6, dtype=complex).reshape(1, 1, 6, 6).copy()
    samples[0, 0, 0, 0] = np.inf
    with pytest.raises(WeightError):
        MaterialWeights.from_samples(square_lattice(), samples)


def test_report_block_minima():
    report = validate_weights(make_homogeneous(4.0, 2.0))
    assert report.passed
    assert report.block_minima["epsilon"] == pytest.approx(4.0)
    assert report.block_minima["mu"] == pytest.approx(2.0)


# --- 3. Rod lattices ---


def test_rod_profile_range():
    h = rod_profile(square_lattice(), 0.2, 0.02, 16)
    assert h.shape == (16, 16)
    assert h[0, 0] == pytest.approx(1.0)
    assert h[8, 8] == pytest.approx(0.0, abs=1e-12)


def test_rod_lattice_values(rods):
    assert not rods.homogeneous
    assert rods.is_real
    assert rods.samples[0, 0, 0, 0].real == pytest.approx(8.9)
    assert rods.samples[8, 8, 0, 0].real == pytest.approx(1.0)
    np.testing.assert_allclose(rods.samples[3, 5, 3:, 3:], np.eye(3))


def test_rod_radius_out_of_range():
    with pytest.raises(WeightError):
        make_rod_lattice(square_lattice(), 0.6, 8.9)
    with pytest.raises(WeightError):
        make_rod_lattice(square_lattice(), 0.2, 8.9, smoothing_width=0.0)


def test_mean_coefficient(rods):
    np.testing.assert_allclose(rods.coefficient(np.zeros(2, dtype=int)), rods.samples.mean(axis=(0, 1)))


def test_coefficient_beyond_grid_is_zero(rods):
    assert np.all(rods.coefficient(np.array([16, 0])) == 0)


def test_coefficient_stops_at_nyquist(rods):
    for m in (1, 7, 8):
        np.testing.assert_array_equal(rods.coefficient(np.array([m, 0])), rods.coefficients[m, 0])
        np.testing.assert_array_equal(rods.coefficient(np.array([0, -m])), rods.coefficients[0, -m])
    for m in (9, 15):
        assert np.all(rods.coefficient(np.array([m, 0])) == 0)
        assert np.all(rods.coefficient(np.array([-m, 3])) == 0)


def test_inverse_samples(rods):
    product = np.einsum("...ab,...bc->...ac", rods.samples, rods.inverse_samples)
    np.testing.assert_allclose(product, np.broadcast_to(np.eye(6), product.shape), atol=1e-12)


def test_resample_keeps_mean(rods):
    coarse = rods.resample((9, 9))
    assert coarse.shape == (9, 9)
    np.testing.assert_allclose(coarse.coefficients[0, 0], rods.coefficients[0, 0], atol=1e-12)
