import math

import numpy as np
import pytest

from maxray.bloch import band_structure
from maxray.errors import DegeneracyError, GapError
from maxray.geometry import (
    ProductObservable,
    assemble_fro,
    band_geometry,
    berry_data_fhs,
    chern_number,
    dispersion,
    fhs_curvature,
    fiber_data,
    fro_symbol,
    group_velocity,
    pi1_matrix,
    pi1_symbol,
    poynting_vector,
    reduced_resolvent_apply,
    state_correction,
    vertex_average,
)
from maxray.lattice import monkhorst_grid, planewave_set, square_lattice
from maxray.materials import MaterialWeights, assemble, make_rod_lattice, rod_profile, vacuum
from maxray.modulation import Constant, Gaussian, modulation_profile

# --- Fixtures ---


@pytest.fixture(scope="module")
def lattice():
    return square_lattice()


@pytest.fixture(scope="module")
def solution(lattice):
    rods = make_rod_lattice(lattice, 0.2, 8.9, 1.0, 0.05, 16)
    basis = planewave_set(lattice, 3 * math.pi, "tm")
    return band_structure(rods, basis, monkhorst_grid(lattice, (6, 6), (0.5, 0.5)), 2)


@pytest.fixture(scope="module")
def gyroelectric(lattice):
    """Gyroelectric rods with μ = 15 inside, dual to the gyromagnetic square-rod Chern crystal."""
    eps = np.diag([14.0, 14.0, 15.0]).astype(complex)
    eps[0, 1], eps[1, 0] = 12.4j, -12.4j
    h = rod_profile(lattice, 0.11, 0.02, 32)[..., None, None]
    return MaterialWeights.from_samples(lattice, (1 - h) * np.eye(6) + h * assemble(eps, 15.0))


@pytest.fixture(scope="module")
def bump():
    return modulation_profile("gaussian_bump", strength=0.3, width=1.5, center=[0.4, -0.2])


@pytest.fixture(scope="module")
def ramp():
    return modulation_profile("smooth_ramp", amplitude=0.4, width=1.0, direction=[1.0, 1.0])


K = np.array([1.1, 0.7])
R = np.array([0.3, -0.1])


# --- 1. Fiber data ---


def test_velocity_matches_finite_difference(solution):
    v = group_velocity(solution, 1, K)
    h = 1e-5
    for j in range(2):
        dk = np.zeros(2)
        dk[j] = h
        fd = (fiber_data(solution, 1, K + dk).omega - fiber_data(solution, 1, K - dk).omega) / (2 * h)
        assert v[j] == pytest.approx(fd, abs=1e-6)


def test_vacuum_velocity_is_unit(lattice):
    basis = planewave_set(lattice, 2 * math.pi, "tm")
    sol = band_structure(vacuum(lattice), basis, np.array([K]), 1)
    np.testing.assert_allclose(np.abs(group_velocity(sol, 1, K)), np.abs(K) / np.linalg.norm(K), atol=1e-10)


def test_degenerate_band_has_no_velocity(lattice):
    basis = planewave_set(lattice, 2 * math.pi, "tm")
    sol = band_structure(vacuum(lattice), basis, np.zeros((1, 2)), 1)
    with pytest.raises(DegeneracyError):
        group_velocity(sol, 1, np.zeros(2))
    with pytest.raises(GapError):
        fiber_data(sol, 1, np.zeros(2)).resolvent()


def test_poynting_is_real_three_vector(solution):
    p = poynting_vector(solution, 1, K)
    assert p.shape == (3,)
    assert np.all(np.isfinite(p))


def test_poynting_cancels_between_k_and_minus_k_for_real_rods(solution):
    assert solution.weights.is_real
    for k in (K, np.array([0.4, -1.3])):
        np.testing.assert_allclose(poynting_vector(solution, 1, -k) + poynting_vector(solution, 1, k), 0.0, atol=1e-8)
        assert fiber_data(solution, 1, -k).omega == pytest.approx(fiber_data(solution, 1, k).omega, abs=1e-10)


def test_resolvent_inverts_off_band(solution):
    data = fiber_data(solution, 1, K)
    res = data.resolvent()
    i = data.index
    other = data.solution.vectors[:, i + 1]
    gap = data.solution.values[i + 1] - data.omega
    np.testing.assert_allclose(res.apply(other), other / gap, atol=1e-9)
    assert np.linalg.norm(res.apply(data.phi)) < 1e-9
    assert 0 <= res.tail < 1


def test_reduced_resolvent_apply(solution):
    data = fiber_data(solution, 1, K)
    other = data.solution.vectors[:, data.index + 2]
    gap = data.solution.values[data.index + 2] - data.omega
    np.testing.assert_allclose(reduced_resolvent_apply(solution, 1, K, other), other / gap, atol=1e-9)


def test_projection_and_derivatives(solution):
    data = fiber_data(solution, 1, K)
    P = data.projection()
    np.testing.assert_allclose(P @ P, P, atol=1e-10)
    np.testing.assert_allclose(P @ data.phi, data.phi, atol=1e-10)
    for j in range(2):
        assert abs(data.inner(data.phi, data.derivatives[:, j])) < 1e-10


# --- 2. Curvature ---


def test_flat_link_field_has_no_flux():
    vectors = np.ones((16, 3), dtype=complex)
    flux = fhs_curvature(vectors, (4, 4))
    assert np.all(np.abs(flux) < 1e-14)


def test_chern_number_of_unit_flux():
    flux = np.full((4, 4), -2 * math.pi / 16)
    assert chern_number(flux) == 1


def test_vertex_average_preserves_sum():
    rng = np.random.default_rng(3)
    plaquettes = rng.standard_normal((5, 4))
    assert vertex_average(plaquettes).sum() == pytest.approx(plaquettes.sum())


def test_real_crystal_has_zero_chern(solution):
    geometry = band_geometry(solution, 1)
    assert geometry.chern == 0
    assert geometry.curvature_grid.shape == (36,)
    assert geometry.velocity_grid.shape == (36, 2)
    np.testing.assert_allclose(geometry.poynting_grid[7], poynting_vector(solution, 1, solution.kpoints[7]), atol=1e-12)


@pytest.mark.slow
def test_gyroelectric_crystal_has_nonzero_chern(lattice, gyroelectric):
    assert not gyroelectric.is_real
    basis = planewave_set(lattice, 8 * math.pi, "te")
    solution = band_structure(gyroelectric, basis, monkhorst_grid(lattice, (24, 24), (0.5, 0.5)), 3)
    cherns = [band_geometry(solution, n).chern for n in (1, 2, 3)]
    assert all(isinstance(c, int) for c in cherns)
    assert any(c != 0 for c in cherns)


def test_berry_data_on_grid(solution):
    data = berry_data_fhs(solution, 1)
    assert data.chern == 0
    assert data.plaquette.shape == (6, 6)
    assert data.vertex.shape == (36,)
    assert data.vertex.sum() == pytest.approx(data.plaquette.sum(), abs=1e-9)


def test_band_geometry_needs_grid(lattice):
    basis = planewave_set(lattice, 2 * math.pi, "tm")
    sol = band_structure(vacuum(lattice), basis, np.array([K]), 1)
    with pytest.raises(ValueError):
        band_geometry(sol, 1)


# --- 3. First-order symbols ---


def test_pi1_vanishes_without_modulation(solution):
    constant = modulation_profile("constant")
    sym = pi1_symbol(solution, constant, R, K, band=1)
    assert np.all(sym.value == 0)


def test_pi1_is_off_diagonal_and_self_adjoint(solution, ramp):
    data = fiber_data(solution, 1, K)
    pi1 = pi1_matrix(data, ramp, R)
    assert abs(data.inner(data.phi, pi1 @ data.phi)) < 1e-10
    np.testing.assert_allclose(state_correction(data, ramp, R), pi1 @ data.phi, atol=1e-10)
    sym = pi1_symbol(solution, ramp, R, K, band=1)
    assert sym.hermiticity_defect() < 1e-9 * max(1.0, sym.norm())


def test_pi1_needs_band_with_bare_solution(solution, ramp):
    with pytest.raises(ValueError):
        pi1_symbol(solution, ramp, R, K)


def test_energy_symbol_is_projection(solution):
    constant = modulation_profile("constant")
    sym = fro_symbol(solution, constant, ProductObservable(Constant(2.0), "identity"), R, K, 0.1, band=1)
    rho = 2.0
    data = fiber_data(solution, 1, K)
    np.testing.assert_allclose(sym.value, rho * data.projection(), atol=1e-10)
    assert sym.coefficients["leading"] == pytest.approx(rho)


def test_general_and_selfadjoint_forms_agree(solution, bump):
    observable = ProductObservable(Gaussian(1.0, [0.2, 0.0]), "amplitude_e", (2,))
    general = fro_symbol(solution, bump, observable, R, K, 0.05, band=1)
    adjoint = fro_symbol(solution, bump, observable, R, K, 0.05, form="selfadjoint", band=1)
    for name in ("bulk", "boundary"):
        assert general.coefficients[name] == pytest.approx(adjoint.coefficients[name], abs=1e-9)
    np.testing.assert_allclose(general.value, adjoint.value, atol=1e-9)


def test_assemble_fro_rebuilds_symbol(solution, ramp):
    observable = ProductObservable(Gaussian(1.0, [0.0, 0.0]), "poynting", (0,))
    sym = fro_symbol(solution, ramp, observable, R, K, 0.1, band=1)
    data = fiber_data(solution, 1, K)
    rebuilt = assemble_fro(data, pi1_matrix(data, ramp, R), 0.1, sym.coefficients)
    np.testing.assert_allclose(rebuilt, sym.value, atol=1e-10)


def test_product_observable_validation(solution):
    with pytest.raises(ValueError):
        ProductObservable(Gaussian(1.0, [0, 0]), "magnetization")
    with pytest.raises(ValueError):
        ProductObservable(Gaussian(1.0, [0, 0]), "energy").form(solution.basis)


def test_unknown_form_rejected(solution, ramp):
    observable = ProductObservable(Gaussian(1.0, [0.0, 0.0]), "energy")
    with pytest.raises(ValueError):
        fro_symbol(solution, ramp, observable, R, K, 0.1, form="weyl", band=1)


# --- 4. Dispersion ---


def test_dispersion_without_modulation(solution):
    geometry = band_geometry(solution, 1)
    d = dispersion(geometry, modulation_profile("constant"), R, K, 0.1)
    assert d.value == pytest.approx(geometry.omega(K))
    np.testing.assert_allclose(d.grad_k, geometry.velocity(K), atol=1e-12)
    np.testing.assert_allclose(d.grad_r, 0.0, atol=1e-14)


def test_scalar_mode_has_no_first_order_term(solution):
    geometry = band_geometry(solution, 1)
    m = modulation_profile("gaussian_bump", mode="scalar", strength=0.3, width=1.0, center=[0.0, 0.0])
    d = dispersion(geometry, m, R, K, 0.1)
    assert d.omega1 == pytest.approx(0.0)
    assert d.value == pytest.approx(m.tau_squared(R) * geometry.omega(K))


def test_dispersion_r_gradient(solution, ramp):
    geometry = band_geometry(solution, 1)
    h = 1e-5
    d = dispersion(geometry, ramp, R, K, 0.1)
    for j in range(2):
        dr = np.zeros(2)
        dr[j] = h
        fd = (dispersion(geometry, ramp, R + dr, K, 0.1).value - dispersion(geometry, ramp, R - dr, K, 0.1).value) / (2 * h)
        assert d.grad_r[j] == pytest.approx(fd, abs=1e-7)
