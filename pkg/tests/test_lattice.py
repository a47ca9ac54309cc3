import math

import numpy as np
import pytest

from maxray.errors import DegenerateLatticeError
from maxray.lattice import (
    PlaneWaveBasis,
    build_lattice,
    cell_fft,
    cell_ifft,
    cell_points,
    cubic_lattice,
    grid_basis,
    hexagonal_lattice,
    kpath,
    monkhorst_grid,
    planewave_set,
    square_lattice,
)

# --- 1. Lattices ---


def test_reciprocal_duality():
    for lattice in (square_lattice(), hexagonal_lattice(), cubic_lattice()):
        d = lattice.dimension
        np.testing.assert_allclose(lattice.vectors @ lattice.reciprocal.T, 2 * math.pi * np.eye(d), atol=1e-12)


def test_degenerate_lattice_rejected():
    with pytest.raises(DegenerateLatticeError, match="degenerate lattice"):
        build_lattice(2, [[1.0, 0.0], [2.0, 0.0]])


def test_wrong_shape_rejected():
    with pytest.raises(DegenerateLatticeError):
        build_lattice(2, [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])


def test_volumes():
    hexagonal = hexagonal_lattice()
    assert math.isclose(hexagonal.volume, math.sqrt(3) / 2)
    assert math.isclose(hexagonal.volume * hexagonal.zone_volume, (2 * math.pi) ** 2)


def test_reduced_coordinates():
    lattice = hexagonal_lattice()
    s = np.array([0.25, -0.4])
    np.testing.assert_allclose(lattice.reduced(lattice.cartesian(s)), s, atol=1e-14)


def test_wrap_folds_into_zone():
    lattice = square_lattice()
    k = lattice.cartesian([1.3, -0.7])
    folded, winding = lattice.wrap(k)
    np.testing.assert_allclose(lattice.reduced(folded), [0.3, 0.3], atol=1e-12)
    assert winding.tolist() == [1, -1]


def test_embed_pads_to_three_components():
    lattice = square_lattice()
    assert lattice.embed(np.ones((4, 2))).shape == (4, 3)
    assert lattice.embed(np.ones(3)).shape == (3,)


# --- 2. Plane-wave sets ---


def test_planewave_set_star():
    basis = planewave_set(square_lattice(), 2 * math.pi)
    assert basis.size == 5
    assert basis.miller[0].tolist() == [0, 0]
    assert basis.is_negation_closed()


def test_planewave_set_sorted_by_norm():
    basis = planewave_set(hexagonal_lattice(), 3 * 2 * math.pi)
    norms = np.linalg.norm(basis.G, axis=1)
    assert np.all(np.diff(norms) >= -1e-9)


def test_sector_dimensions():
    lattice = square_lattice()
    full = planewave_set(lattice, 2 * math.pi)
    te = planewave_set(lattice, 2 * math.pi, "te")
    assert full.ncomp == 6 and te.ncomp == 3
    assert te.dim == 3 * full.size
    assert te.components == (0, 1, 5)


def test_sector_needs_two_dimensions():
    lattice = cubic_lattice()
    with pytest.raises(ValueError):
        PlaneWaveBasis(lattice, np.zeros((1, 3), dtype=int), 0.0, "tm")


def test_positive_count_at_gamma():
    basis = planewave_set(square_lattice(), 2 * math.pi)
    assert basis.positive_count(np.zeros(2)) == 8
    te = planewave_set(square_lattice(), 2 * math.pi, "te")
    assert te.positive_count(np.zeros(2)) == 4
    assert te.positive_count(np.array([0.1, 0.0])) == 5


def test_shift_map_moves_modes():
    basis = planewave_set(square_lattice(), 2 * math.pi)
    dst, src = basis.shift_map([1, 0])
    for i, j in zip(dst, src):
        assert (basis.miller[j] - basis.miller[i]).tolist() == [1, 0]


def test_grid_basis():
    basis = grid_basis(square_lattice(), 3)
    assert basis.size == 9
    with pytest.raises(ValueError):
        grid_basis(square_lattice(), 4)


# --- 3. Brillouin-zone sampling ---


def test_monkhorst_grid():
    grid = monkhorst_grid(square_lattice(), (4, 4))
    assert grid.size == 16
    np.testing.assert_allclose(grid.reduced[5], [0.25, 0.25])
    assert grid.neighbor(3, 1) == 0
    assert grid.wraps[1, 3]
    assert math.isclose(grid.plaquette_area, (2 * math.pi / 4) ** 2)


def test_monkhorst_grid_rejects_bad_counts():
    with pytest.raises(ValueError):
        monkhorst_grid(square_lattice(), (4,))


def test_kpath_labels_and_distance():
    path = kpath(square_lattice(), [("G", [0, 0]), ("X", [0.5, 0]), ("M", [0.5, 0.5])], 10)
    assert path.size == 21
    assert path.labels == [(0, "G"), (10, "X"), (20, "M")]
    assert math.isclose(path.distance[-1], 2 * math.pi)


def test_kpath_needs_two_points():
    with pytest.raises(ValueError):
        kpath(square_lattice(), [("G", [0, 0])])


# --- 4. Cell transforms ---


def test_cell_points_shape():
    y = cell_points(square_lattice(), (4, 3))
    assert y.shape == (4, 3, 2)
    np.testing.assert_allclose(y[2, 0], [0.5, 0.0])


def test_cell_fft_of_constant():
    samples = np.full((5, 5), 2.5)
    coeffs = cell_fft(samples, 2)
    assert math.isclose(coeffs[0, 0].real, 2.5)
    assert np.max(np.abs(coeffs.ravel()[1:])) < 1e-14
    np.testing.assert_allclose(cell_ifft(coeffs, 2).real, samples)


def test_cell_fft_single_harmonic():
    lattice = square_lattice()
    y = cell_points(lattice, (8, 8))
    samples = np.exp(1j * y @ lattice.reciprocal[0])
    coeffs = cell_fft(samples, 2)
    assert math.isclose(abs(coeffs[1, 0]), 1.0)


def test_cell_fft_rejects_nan():
    with pytest.raises(ValueError):
        cell_fft(np.array([[np.nan]]), 2)
