import numpy as np
import pytest

from maxray.errors import WeightError
from maxray.modulation import (
    Constant,
    Gaussian,
    GaussianBump,
    ModulationProfile,
    Product,
    SmoothRamp,
    make_profile,
    modulation_profile,
)

# --- Helpers ---


def numeric_gradient(f, r, h=1e-6):
    r = np.asarray(r, dtype=float)
    out = []
    for j in range(len(r)):
        dr = np.zeros_like(r)
        dr[j] = h
        out.append((f(r + dr) - f(r - dr)) / (2 * h))
    return np.stack(out, axis=-1)


def assert_derivatives(profile, r):
    np.testing.assert_allclose(profile.gradient(r), numeric_gradient(profile.value, r), atol=1e-7)
    np.testing.assert_allclose(profile.hessian(r), numeric_gradient(profile.gradient, r), atol=1e-6)


# --- 1. Profiles ---


def test_constant_shapes():
    c = Constant(2.0)
    r = np.zeros((4, 3, 2))
    assert c.value(r).shape == (4, 3)
    assert c.gradient(r).shape == (4, 3, 2)
    assert c.hessian(r).shape == (4, 3, 2, 2)
    assert c.bounds() == (2.0, 2.0)


def test_gaussian_derivatives():
    assert_derivatives(Gaussian(0.7, [0.1, -0.2]), np.array([0.3, 0.4]))


def test_bump_is_one_at_origin():
    bump = GaussianBump(0.5, 1.0, [0.3, 0.0])
    assert bump.value(np.zeros(2)) == pytest.approx(1.0)
    assert_derivatives(bump, np.array([0.6, -0.1]))


def test_bump_strength_floor():
    with pytest.raises(WeightError):
        GaussianBump(-1.0, 1.0, [0.0, 0.0])


def test_ramp_bounds_and_derivatives():
    ramp = SmoothRamp(0.4, 0.5, [1.0, 1.0], 0.2)
    lo, hi = ramp.bounds()
    values = ramp.value(np.linspace(-5, 5, 41)[:, None] * np.ones(2))
    assert np.all(values >= lo - 1e-12) and np.all(values <= hi + 1e-12)
    assert_derivatives(ramp, np.array([0.1, 0.3]))


def test_product_derivatives():
    p = Product(GaussianBump(0.3, 1.2, [0.0, 0.5]), SmoothRamp(0.2, 0.8, [1.0, 0.0]), Gaussian(2.0, [0.0, 0.0]))
    assert_derivatives(p, np.array([0.4, -0.3]))


def test_product_value_and_bounds():
    p = Product(Constant(2.0), Constant(3.0))
    assert p.value(np.zeros(2)) == pytest.approx(6.0)
    assert p.bounds() == (6.0, 6.0)


def test_empty_product_rejected():
    with pytest.raises(WeightError):
        Product()


def test_make_profile():
    assert isinstance(make_profile("gaussian", width=1.0, center=[0, 0]), Gaussian)
    with pytest.raises(WeightError, match="unknown profile"):
        make_profile("sawtooth")
    with pytest.raises(WeightError, match="bad parameters"):
        make_profile("gaussian", radius=1.0)


# --- 2. Modulation profiles ---


def test_scalar_mode_has_no_coupling():
    m = modulation_profile("gaussian_bump", mode="scalar", strength=0.3, width=1.0, center=[0.5, 0.0])
    assert m.mu is m.epsilon
    r = np.array([[0.2, 0.1], [1.0, -0.4]])
    assert np.all(m.coupling(r) == 0)
    np.testing.assert_allclose(m.tau_squared(r), m.tau_eps(r) ** 2)


def test_split_mode_coupling():
    m = modulation_profile("smooth_ramp", amplitude=0.5, width=0.5, direction=[1.0, 0.0])
    r = np.array([0.1, 0.0])
    np.testing.assert_allclose(m.coupling(r), m.epsilon.gradient(r) / m.epsilon.value(r))
    np.testing.assert_allclose(m.coupling_hessian(r), numeric_gradient(m.coupling, r), atol=1e-6)


def test_log_tau_gradient():
    m = modulation_profile("gaussian_bump", strength=0.4, width=0.9, center=[0.2, 0.1])
    r = np.array([0.3, -0.2])
    np.testing.assert_allclose(m.log_tau_gradient(r), numeric_gradient(lambda x: np.log(m.tau(x)), r), atol=1e-8)
    np.testing.assert_allclose(m.tau_squared_gradient(r), numeric_gradient(m.tau_squared, r), atol=1e-8)


def test_constant_modulation():
    m = modulation_profile("constant")
    assert m.is_constant
    with pytest.raises(WeightError):
        modulation_profile("constant", c=2.0)


def test_profiles_must_stay_positive():
    with pytest.raises(WeightError):
        ModulationProfile(Constant(-1.0), Constant())
    with pytest.raises(WeightError, match="same profile"):
        ModulationProfile(Constant(), Constant(), "scalar")


def test_unknown_kind_rejected():
    with pytest.raises(WeightError):
        modulation_profile("gaussian", width=1.0, center=[0, 0])
