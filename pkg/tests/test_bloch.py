import math

import numpy as np
import pytest

from maxray.bloch import (
    BlochFiber,
    DosTable,
    assemble_fiber,
    band_structure,
    check_gap,
    check_particle_hole,
    cross_matrix,
    dos_estimate,
    dos_exponent,
    field_components,
    hausdorff,
    mass_matrix,
    self_convergence,
    solve_fiber,
)
from maxray.errors import LatticeMismatchError, SolverError, SymmetryNotApplicable
from maxray.lattice import hexagonal_lattice, kpath, monkhorst_grid, planewave_set, square_lattice
from maxray.materials import make_homogeneous, make_rod_lattice, vacuum

# --- Fixtures ---


@pytest.fixture
def lattice():
    return square_lattice()


@pytest.fixture
def tm_basis(lattice):
    return planewave_set(lattice, 2 * math.pi, "tm")


@pytest.fixture
def rods(lattice):
    return make_rod_lattice(lattice, 0.2, 8.9, 1.0, 0.05, 16)


def gyrotropic(lattice):
    eps = 2.0 * np.eye(3, dtype=complex)
    eps[0, 1], eps[1, 0] = 0.4j, -0.4j
    return make_homogeneous(eps, lattice=lattice)


# --- 1. Blocks ---


def test_cross_matrix():
    q, v = np.array([1.0, 2.0, 3.0]), np.array([-0.5, 0.3, 2.0])
    np.testing.assert_allclose(cross_matrix(q) @ v, np.cross(q, v))


def test_field_components_fill_sector(tm_basis):
    v = np.arange(tm_basis.dim, dtype=complex)
    f = field_components(tm_basis, v)
    assert f.shape == (tm_basis.size, 6)
    assert np.all(f[:, [0, 1, 5]] == 0)
    np.testing.assert_allclose(f[0, [2, 3, 4]], [0, 1, 2])


def test_mass_matrix_of_vacuum_is_identity(tm_basis):
    B = mass_matrix(vacuum(), tm_basis)
    np.testing.assert_allclose(B, np.eye(tm_basis.dim))


def test_lattice_mismatch(tm_basis):
    with pytest.raises(LatticeMismatchError):
        mass_matrix(vacuum(hexagonal_lattice()), tm_basis)


# --- 2. Fibers ---


def test_vacuum_light_cone(lattice, tm_basis):
    k = lattice.cartesian([0.1, 0.0])
    sol = solve_fiber(assemble_fiber(vacuum(lattice), tm_basis, k), 2)
    assert sol.npos == 5
    assert sol.band(1)[0] == pytest.approx(0.2 * math.pi)
    assert sol.band(2)[0] == pytest.approx(1.8 * math.pi)


def test_homogeneous_dielectric_slows_light(lattice, tm_basis):
    k = lattice.cartesian([0.2, 0.1])
    sol = solve_fiber(assemble_fiber(make_homogeneous(4.0, lattice=lattice), tm_basis, k))
    assert sol.band(1)[0] == pytest.approx(np.linalg.norm(k) / 2)


def test_residual_and_orthonormality(lattice, rods):
    basis = planewave_set(lattice, 3 * math.pi, "tm")
    fiber = assemble_fiber(rods, basis, lattice.cartesian([0.3, 0.1]))
    sol = solve_fiber(fiber)
    assert sol.residual(1) < 1e-10
    gram = sol.vectors.conj().T @ fiber.B @ sol.vectors
    np.testing.assert_allclose(gram, np.eye(fiber.dim), atol=1e-10)


def test_too_many_bands(lattice, tm_basis):
    fiber = assemble_fiber(vacuum(lattice), tm_basis, lattice.cartesian([0.1, 0.0]))
    with pytest.raises(ValueError):
        solve_fiber(fiber, fiber.dim + 1)
    with pytest.raises(ValueError):
        solve_fiber(fiber, 6)


def test_indefinite_mass_raises_solver_error(lattice, tm_basis):
    good = assemble_fiber(vacuum(lattice), tm_basis, np.zeros(2))
    bad = BlochFiber(good.k, good.R, -np.eye(good.dim), good.basis, good.weights)
    with pytest.raises(SolverError) as info:
        solve_fiber(bad)
    np.testing.assert_allclose(info.value.k, np.zeros(2))


def test_window_solution_has_no_labels(lattice, tm_basis):
    fiber = assemble_fiber(vacuum(lattice), tm_basis, lattice.cartesian([0.1, 0.0]))
    sol = solve_fiber(fiber, window=(0.1, 2.0))
    assert sol.values.tolist() == pytest.approx([0.2 * math.pi])
    with pytest.raises(ValueError):
        sol.index(1)


def test_sectors_decouple(lattice, rods):
    k = lattice.cartesian([0.25, 0.1])
    spectra = {
        sector: solve_fiber(assemble_fiber(rods, planewave_set(lattice, 3 * math.pi, sector), k)).values
        for sector in ("full", "te", "tm")
    }
    union = np.sort(np.concatenate([spectra["te"], spectra["tm"]]))
    np.testing.assert_allclose(spectra["full"], union, atol=1e-9)


# --- 3. Band structures ---


def test_path_follows_light_line(lattice, tm_basis):
    path = kpath(lattice, [("G", [0.05, 0.0]), ("X", [0.45, 0.0])], 8)
    sol = band_structure(vacuum(lattice), tm_basis, path, 1)
    np.testing.assert_allclose(sol.band_values(1), np.linalg.norm(path.points, axis=1), atol=1e-12)
    assert sol.grid is path


def test_grid_solution_shapes(lattice, tm_basis):
    grid = monkhorst_grid(lattice, (3, 3), (0.5, 0.5))
    sol = band_structure(vacuum(lattice), tm_basis, grid, 2, threads=2)
    assert sol.values.shape == (9, 2)
    assert sol.band_vectors(1).shape == (9, tm_basis.dim)
    assert sol.nbands == 2


def test_gap_fails_at_gamma(lattice, tm_basis):
    sol = band_structure(vacuum(lattice), tm_basis, monkhorst_grid(lattice, (4, 4)), 1)
    report = check_gap(sol, 1)
    # band 1 at Γ is the fourfold star |G| = 2π
    assert not report.passed
    assert report.margin == pytest.approx(0.0, abs=1e-9)


def test_gap_passes_off_gamma(lattice):
    basis = planewave_set(lattice, 3 * math.pi, "tm")
    sol = band_structure(vacuum(lattice), basis, monkhorst_grid(lattice, (4, 4), (0.5, 0.5)), 1)
    report = check_gap(sol, 1)
    assert report.ground > 0 and report.margin > 0


# --- 4. Symmetry and convergence ---


def test_particle_hole_real(lattice, rods):
    basis = planewave_set(lattice, 2 * math.pi)
    sol = band_structure(rods, basis, monkhorst_grid(lattice, (2, 2), (0.25, 0.25)), 1)
    assert check_particle_hole(sol) < 1e-9


def test_particle_hole_gyrotropic(lattice):
    basis = planewave_set(lattice, 2 * math.pi)
    sol = band_structure(gyrotropic(lattice), basis, np.array([[0.3, 0.2]]), 1)
    with pytest.raises(SymmetryNotApplicable):
        check_particle_hole(sol)
    assert check_particle_hole(sol, conjugate=True) < 1e-9


def test_fiber_is_equivariant_under_reciprocal_shifts(lattice, rods, tm_basis):
    k = np.array([0.3, -0.2])
    for miller in ([1, 0], [0, -1], [1, 1]):
        moved = solve_fiber(assemble_fiber(rods, tm_basis, k + np.asarray(miller) @ lattice.reciprocal))
        shifted = solve_fiber(assemble_fiber(rods, tm_basis.shift(miller), k))
        np.testing.assert_allclose(moved.values, shifted.values, atol=1e-8)
        assert moved.npos == shifted.npos


def test_hausdorff():
    assert hausdorff([0.0, 1.0], [0.0, 1.5]) == pytest.approx(0.5)


def test_self_convergence_of_homogeneous(lattice):
    k = [lattice.cartesian([0.1, 0.0])]
    assert self_convergence(make_homogeneous(3.0, lattice=lattice), k, 2, 2 * math.pi, sector="tm") < 1e-12


# --- 5. Density of states ---


def test_gaussian_dos_normalization(lattice, tm_basis):
    sol = band_structure(vacuum(lattice), tm_basis, monkhorst_grid(lattice, (6, 6), (0.5, 0.5)), 3)
    table = dos_estimate(sol, method="gaussian", width=0.5, bins=400)
    assert table.nbands == 3
    assert table.integral() == pytest.approx(3.0, rel=1e-2)


def test_dos_needs_width():
    with pytest.raises(ValueError):
        dos_estimate(np.ones((4, 1)), method="gaussian")


def test_dos_exponent_of_power_law():
    omega = np.linspace(0.01, 1.0, 200)
    table = DosTable(omega, omega**2, 1, "synthetic")
    assert dos_exponent(table, 0.0, (0.1, 0.9)) == pytest.approx(2.0)
