"""Geometric and first-order band data: curvature, Poynting vector, resolvent, symbols.

Fiber operators act on plane-wave coefficient vectors. M(k) = B⁻¹R(k) is
self-adjoint for ⟨a, b⟩_w = a^H B b, so every projection and symbol below is
a B-self-adjoint matrix and "Hermitian" means B·A is Hermitian.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Literal, Protocol, Sequence

import numpy as np
import scipy.linalg

from .bloch import (
    BlochSolution,
    FiberSolution,
    apply_block,
    assemble_fiber,
    field_components,
    mass_matrix,
    rot_blocks,
    sector_block,
    solve_fiber,
    spin_blocks,
    unit,
)
from .errors import DegeneracyError, GapError
from .lattice import KGrid, PlaneWaveBasis
from .modulation import ModulationProfile, Profile

logger = logging.getLogger(__name__)

LINK_FLOOR = 1e-8


# --- Single-fiber data ---


@dataclass(frozen=True, eq=False)
class ResolventHandle:
    """R⊥ = Σ_{m≠n} φ_m φ_m^H B / (ω_m - ω_n) over the computed spectrum."""

    vectors: np.ndarray = field(repr=False)
    denominators: np.ndarray = field(repr=False)
    metric: np.ndarray = field(repr=False)
    tail: float

    @property
    def captured(self) -> float:
        return 1.0 - self.tail

    def apply(self, v: np.ndarray) -> np.ndarray:
        c = self.vectors.conj().T @ (self.metric @ v)
        return self.vectors @ (c / _column(self.denominators, c))

    def apply_form(self, w: np.ndarray) -> np.ndarray:
        """R⊥B⁻¹w, for w already carrying the metric (a current J φ, say)."""
        c = self.vectors.conj().T @ w
        return self.vectors @ (c / _column(self.denominators, c))

    def left(self, u: np.ndarray) -> np.ndarray:
        """Row vector u·R⊥."""
        c = (u @ self.vectors) / self.denominators
        return c @ (self.vectors.conj().T @ self.metric)


def _column(d: np.ndarray, like: np.ndarray) -> np.ndarray:
    return d if like.ndim == 1 else d[:, None]


@dataclass(frozen=True, eq=False)
class FiberData:
    solution: FiberSolution
    band: int

    @property
    def k(self) -> np.ndarray:
        return self.solution.fiber.k

    @property
    def basis(self) -> PlaneWaveBasis:
        return self.solution.fiber.basis

    @property
    def B(self) -> np.ndarray:
        return self.solution.fiber.B

    @property
    def R(self) -> np.ndarray:
        return self.solution.fiber.R

    @cached_property
    def index(self) -> int:
        return self.solution.index(self.band)

    @property
    def omega(self) -> float:
        return float(self.solution.values[self.index])

    @property
    def phi(self) -> np.ndarray:
        return self.solution.vectors[:, self.index]

    @cached_property
    def _cross(self) -> np.ndarray:
        f = field_components(self.basis, self.phi)
        return np.sum(np.cross(f[:, :3].conj(), f[:, 3:]), axis=0)

    @property
    def velocity(self) -> np.ndarray:
        d = self.basis.lattice.dimension
        return 2 * self._cross.real[:d]

    @property
    def poynting(self) -> np.ndarray:
        return self._cross.imag.copy()

    @cached_property
    def _cholesky(self):
        return scipy.linalg.cho_factor(self.B, lower=True)

    def solve_mass(self, v: np.ndarray) -> np.ndarray:
        return scipy.linalg.cho_solve(self._cholesky, v)

    def current(self, j: int, v: np.ndarray | None = None) -> np.ndarray:
        """J_j v, with J_j = ∂R/∂k_j."""
        return apply_block(rot_blocks(unit(j)), self.basis, self.phi if v is None else v)

    def spin(self, j: int, v: np.ndarray | None = None) -> np.ndarray:
        return apply_block(spin_blocks(unit(j)), self.basis, self.phi if v is None else v)

    def gap(self) -> float:
        values, i = self.solution.values, self.index
        below = values[i] - values[i - 1] if i > 0 else np.inf
        above = values[i + 1] - values[i] if i + 1 < len(values) else np.inf
        return float(min(below, above))

    def resolvent(self, tol: float = 1e-8) -> ResolventHandle:
        values, i = self.solution.values, self.index
        others = np.delete(np.arange(len(values)), i)
        den = values[others] - values[i]

        closest = int(np.argmin(np.abs(den)))
        if abs(den[closest]) < tol * max(1.0, abs(values[i])):
            raise GapError(
                f"band {self.band} is near-degenerate at k={self.k} "
                f"(gap {abs(den[closest]):.3e})",
                index=int(others[closest]),
            )
        return ResolventHandle(self.solution.vectors[:, others], den, self.B, self._tail())

    def _tail(self) -> float:
        """Coefficient weight of φ on the outermost plane-wave shell."""
        if self.solution.fiber.weights.homogeneous:
            return 0.0
        g = np.linalg.norm(self.basis.G, axis=1)
        if g.max() == 0:
            return 0.0
        c = np.sum(np.abs(self.phi.reshape(self.basis.size, -1)) ** 2, axis=1)
        return float(c[g >= 0.8 * g.max()].sum() / c.sum())

    @cached_property
    def derivatives(self) -> np.ndarray:
        """π₀⊥∂_{k_j}φ = -R⊥B⁻¹J_jφ as columns, shape (dim, d)."""
        res = self.resolvent()
        d = self.basis.lattice.dimension
        return np.stack([-res.apply_form(self.current(j)) for j in range(d)], axis=1)

    def projection(self) -> np.ndarray:
        return np.outer(self.phi, self.phi.conj() @ self.B)

    def inner(self, a: np.ndarray, b: np.ndarray) -> complex:
        return complex(a.conj() @ (self.B @ b))


def fiber_data(solution: BlochSolution, band: int, k) -> FiberData:
    fiber = assemble_fiber(solution.weights, solution.basis, k)
    return FiberData(solve_fiber(fiber), band)


def _isolated(data: FiberData) -> FiberData:
    if data.gap() < 1e-8 * max(1.0, abs(data.omega)):
        raise DegeneracyError(
            f"band {data.band} is degenerate at k={data.k}; ordering is ambiguous",
            index=data.index,
        )
    return data


def group_velocity(solution: BlochSolution, band: int, k) -> np.ndarray:
    """Hellmann-Feynman ∇_k ω = ⟨φ, J_j φ⟩ = 2 Re Σ_G conj(E_G) × H_G."""
    return _isolated(fiber_data(solution, band, k)).velocity


def poynting(basis: PlaneWaveBasis, phi: np.ndarray) -> np.ndarray:
    """Im Σ_G conj(E_G) × H_G of a coefficient vector, as given."""
    f = field_components(basis, phi)
    return np.sum(np.cross(f[:, :3].conj(), f[:, 3:]), axis=0).imag


def poynting_vector(solution: BlochSolution, band: int, k) -> np.ndarray:
    return fiber_data(solution, band, k).poynting


def reduced_resolvent_apply(solution: BlochSolution, band: int, k, vector) -> np.ndarray:
    return fiber_data(solution, band, k).resolvent().apply(np.asarray(vector, dtype=complex))


# --- Curvature ---


def _forward(shape: tuple[int, ...], axis: int) -> tuple[np.ndarray, np.ndarray]:
    idx = np.arange(int(np.prod(shape))).reshape(shape)
    multi = np.indices(shape)
    return np.roll(idx, -1, axis=axis).ravel(), (multi[axis] == shape[axis] - 1).ravel()


def fhs_curvature(
    vectors: np.ndarray,
    shape: Sequence[int],
    *,
    metric: np.ndarray | None = None,
    wrap: Callable[[np.ndarray, int], np.ndarray] | None = None,
    axes: tuple[int, int] = (0, 1),
) -> np.ndarray:
    """Plaquette fluxes F = arg(U_1 U_2(k+e_1) / (U_1(k+e_2) U_2)) of a band on a periodic grid.

    ``vectors`` holds one state per grid point in row-major order. ``wrap(v, axis)``
    re-expresses states taken from the start of an axis at the far end of the zone.
    Returns fluxes with the grid's shape.
    """
    shape = tuple(int(n) for n in shape)
    vectors = np.asarray(vectors)

    def link(axis: int) -> np.ndarray:
        nbr, wraps = _forward(shape, axis)
        target = vectors[nbr].copy()
        if wrap is not None and wraps.any():
            target[wraps] = wrap(target[wraps].T, axis).T
        rhs = target if metric is None else target @ metric.T
        z = np.sum(vectors.conj() * rhs, axis=1)
        small = np.flatnonzero(np.abs(z) < LINK_FLOOR)
        if small.size:
            i = int(small[0])
            raise GapError(f"vanishing link overlap at k-index {i} (axis {axis})", index=i)
        return z / np.abs(z)

    a, b = axes
    u1, u2 = link(a), link(b)
    nbr_a, _ = _forward(shape, a)
    nbr_b, _ = _forward(shape, b)
    flux = np.angle(u1 * u2[nbr_a] / (u1[nbr_b] * u2))
    return flux.reshape(shape)


def chern_number(flux: np.ndarray) -> int:
    """(1/2π) ∫Ξ as the plaquette sum; an integer up to rounding."""
    c = -float(np.sum(flux)) / (2 * math.pi)
    n = round(c)
    if abs(c - n) > 1e-6:
        logger.warning("plaquette flux sum %.9f is not an integer", c)
    return int(n)


def vertex_average(plaquettes: np.ndarray, axes: tuple[int, int] = (0, 1)) -> np.ndarray:
    """Mean of the four plaquettes sharing each grid vertex."""
    a, b = axes
    return 0.25 * (
        plaquettes
        + np.roll(plaquettes, 1, axis=a)
        + np.roll(plaquettes, 1, axis=b)
        + np.roll(np.roll(plaquettes, 1, axis=a), 1, axis=b)
    )


@dataclass(frozen=True)
class BerryData:
    plaquette: np.ndarray
    vertex: np.ndarray
    chern: int | None


def berry_data_fhs(solution: BlochSolution, band: int) -> BerryData:
    """Berry curvature Ξ = ∂₁A₂ - ∂₂A₁ from link variables on the solution's k-grid.

    In d = 2 the curvature is a scalar per point and the Chern number is returned.
    In d = 3 the three independent components Ξ_23, Ξ_31, Ξ_12 are stacked last.
    """
    grid = solution.grid
    if not isinstance(grid, KGrid):
        raise ValueError("Berry curvature needs a solution on a k-grid")

    basis = solution.basis
    d = grid.lattice.dimension
    vectors = solution.band_vectors(band)
    steps = grid.lattice.reciprocal / np.asarray(grid.shape)[:, None]

    def wrap(v, axis):
        m = np.zeros(d, dtype=int)
        m[axis] = 1
        return basis.shift_vectors(v, m)

    metric = mass_matrix(solution.weights, solution.basis)
    if d == 2:
        flux = fhs_curvature(vectors, grid.shape, metric=metric, wrap=wrap)
        plaquette = -flux / grid.plaquette_area
        return BerryData(plaquette, vertex_average(plaquette).ravel(), chern_number(flux))

    planes = [(1, 2), (2, 0), (0, 1)]
    plaquette = np.stack(
        [
            -fhs_curvature(vectors, grid.shape, metric=metric, wrap=wrap, axes=p)
            / float(np.linalg.norm(np.cross(steps[p[0]], steps[p[1]])))
            for p in planes
        ],
        axis=-1,
    )
    vertex = np.stack(
        [vertex_average(plaquette[..., i], p).ravel() for i, p in enumerate(planes)], axis=-1
    )
    return BerryData(plaquette, vertex, None)


# --- Band geometry on a grid ---


class BandData(Protocol):
    """Band quantities at arbitrary k, as used by the dispersion relation."""

    def omega(self, k) -> float: ...

    def velocity(self, k) -> np.ndarray: ...

    def poynting(self, k) -> np.ndarray: ...

    def poynting_jacobian(self, k) -> np.ndarray: ...


@dataclass(frozen=True, eq=False)
class BandGeometry:
    solution: BlochSolution
    band: int
    omega_grid: np.ndarray
    velocity_grid: np.ndarray
    poynting_grid: np.ndarray
    curvature_grid: np.ndarray
    chern: int | None

    @property
    def grid(self) -> KGrid:
        return self.solution.grid

    def fiber_data(self, k) -> FiberData:
        return fiber_data(self.solution, self.band, k)

    # BandData at off-grid k, solved exactly.

    def omega(self, k) -> float:
        return self.fiber_data(k).omega

    def velocity(self, k) -> np.ndarray:
        return self.fiber_data(k).velocity

    def poynting(self, k) -> np.ndarray:
        return self.fiber_data(k).poynting

    def poynting_jacobian(self, k, h: float = 1e-5) -> np.ndarray:
        """∂P_a/∂k_j by centered differences of the gauge-invariant P, shape (3, d)."""
        k = np.asarray(k, dtype=float)
        cols = []
        for j in range(len(k)):
            dk = np.zeros_like(k)
            dk[j] = h
            cols.append((self.poynting(k + dk) - self.poynting(k - dk)) / (2 * h))
        return np.stack(cols, axis=1)


def band_geometry(solution: BlochSolution, band: int, *, threads: int | None = None) -> BandGeometry:
    if not isinstance(solution.grid, KGrid):
        raise ValueError("band geometry needs a solution on a k-grid")
    if solution.grid.lattice.dimension == 2 and solution.basis.sector == "full":
        logger.debug("full six-component sector in d=2; TE and TM bands interleave")

    basis = solution.basis
    vectors = solution.band_vectors(band)

    def per_k(i):
        f = field_components(basis, vectors[i])
        return np.sum(np.cross(f[:, :3].conj(), f[:, 3:]), axis=0)

    with ThreadPoolExecutor(max_workers=threads) as pool:
        cross = np.array(list(pool.map(per_k, range(len(vectors)))))

    d = solution.grid.lattice.dimension
    berry = berry_data_fhs(solution, band)
    logger.debug("band %d geometry on %s grid, chern=%s", band, solution.grid.shape, berry.chern)

    return BandGeometry(
        solution,
        band,
        solution.band_values(band).copy(),
        2 * cross.real[:, :d],
        cross.imag,
        berry.vertex,
        berry.chern,
    )


# --- Symbols ---


type Order = Literal["O(1)", "O(lambda)"]


@dataclass(frozen=True, eq=False)
class SymbolMatrix:
    r: np.ndarray
    k: np.ndarray
    value: np.ndarray = field(repr=False)
    order: Order
    metric: np.ndarray = field(repr=False)
    terms: dict[str, np.ndarray] = field(default_factory=dict, repr=False)
    coefficients: dict[str, object] = field(default_factory=dict)

    def hermiticity_defect(self) -> float:
        a = self.metric @ self.value
        return float(np.linalg.norm(a - a.conj().T))

    def norm(self) -> float:
        return float(np.linalg.norm(self.value))


def pi1_row(data: FiberData, modulation: ModulationProfile, r) -> np.ndarray:
    """Row ℓ with π₁ = φℓ + adjoint.

    ℓ = Σ_j [-(i/2) g_j φ^H E_j + i h_j ψ_j^H (R + ωB)] R⊥ with g = ∇ ln(τ_ε/τ_μ),
    h = ∇ ln τ and ψ_j = π₀⊥∂_jφ.
    """
    r = np.asarray(r, dtype=float)
    g = modulation.coupling(r)
    h = modulation.log_tau_gradient(r)
    dim = len(data.phi)

    if not (np.any(g) or np.any(h)):
        return np.zeros(dim, dtype=complex)

    res = data.resolvent()
    shifted = data.R + data.omega * data.B
    row = np.zeros(dim, dtype=complex)
    for j in range(len(r)):
        if g[j]:
            # φ^H E_j = -(E_j φ)^H since E_j is antisymmetric
            row += -0.5j * g[j] * (-data.spin(j).conj())
        if h[j]:
            row += 1j * h[j] * (data.derivatives[:, j].conj() @ shifted)
    return res.left(row)


def _pi1_from_row(data: FiberData, row: np.ndarray) -> np.ndarray:
    x = np.outer(data.phi, row)
    return x + data.solve_mass(x.conj().T @ data.B)


def pi1_matrix(data: FiberData, modulation: ModulationProfile, r) -> np.ndarray:
    return _pi1_from_row(data, pi1_row(data, modulation, r))


def pi1_symbol(geometry: BandGeometry | BlochSolution, modulation: ModulationProfile, r, k, *, band: int | None = None) -> SymbolMatrix:
    data = _data(geometry, k, band)
    pi1 = pi1_matrix(data, modulation, r)
    return SymbolMatrix(np.asarray(r, float), data.k, pi1, "O(lambda)", data.B)


def _data(geometry, k, band) -> FiberData:
    if isinstance(geometry, BandGeometry):
        return geometry.fiber_data(k)
    if band is None:
        raise ValueError("a band index is needed with a bare solution")
    return fiber_data(geometry, band, k)


def state_correction(data: FiberData, modulation: ModulationProfile, r) -> np.ndarray:
    """π₁φ = B⁻¹ℓ^H, the first-order correction of the band state."""
    return data.solve_mass(pi1_row(data, modulation, r).conj())


# --- Observables ---


def _stress_block(j: int, n: int) -> np.ndarray:
    q = 0.5 * (np.outer(unit(j), unit(n)) + np.outer(unit(n), unit(j)))
    if j == n:
        q -= 0.5 * np.eye(3)
    return np.kron(np.eye(2), q)


def _amplitude_block(n: int) -> np.ndarray:
    out = np.zeros((6, 6))
    out[n, n] = 1.0
    return out


OPERATOR_BLOCKS: dict[str, Callable[..., np.ndarray | None]] = {
    "identity": lambda: None,
    "energy": lambda: None,
    "poynting": lambda n: rot_blocks(unit(n)),
    "amplitude_e": _amplitude_block,
    "stress": _stress_block,
}


@dataclass(frozen=True, eq=False)
class ProductObservable:
    """f(r, k) = ρ(r)·W·I with I a constant Hermitian 6x6 block.

    In a fiber f acts as ρ(r)·B⁻¹Î, where Î repeats I on every plane wave. The
    identity and energy observables are ρ(r) times the identity.
    """

    rho: Profile
    kind: str = "energy"
    indices: tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind not in OPERATOR_BLOCKS:
            raise ValueError(f"unknown observable '{self.kind}'")

    @property
    def block(self) -> np.ndarray | None:
        return OPERATOR_BLOCKS[self.kind](*self.indices)

    def form(self, basis: PlaneWaveBasis) -> np.ndarray:
        """Î on the fiber, i.e. B times the fiber matrix."""
        block = self.block
        if block is None:
            raise ValueError(f"'{self.kind}' is the identity and has no form matrix")
        return np.kron(np.eye(basis.size), sector_block(block, basis.components))

    def fiber_matrix(self, data: FiberData) -> np.ndarray:
        if self.block is None:
            return np.eye(len(data.phi), dtype=complex)
        return data.solve_mass(self.form(data.basis).astype(complex))

    def evaluate(self, data: FiberData, r) -> tuple[np.ndarray, np.ndarray]:
        """(f, ∂_r f) at r in the fiber, with ∂_r f stacked along the first axis."""
        F = self.fiber_matrix(data)
        return self.rho.value(r) * F, self.rho.gradient(r)[:, None, None] * F


type Form = Literal["general", "selfadjoint"]


def fro_symbol(
    geometry: BandGeometry | BlochSolution,
    modulation: ModulationProfile,
    observable: ProductObservable | Callable[[FiberData, np.ndarray], tuple[np.ndarray, np.ndarray]],
    r,
    k,
    lam: float,
    *,
    form: Form = "general",
    band: int | None = None,
) -> SymbolMatrix:
    """Ray-optics observable f_ro to first order in λ.

    f_ro = c0·π₀ + λ(c_bulk + c_boundary)·π₀ + λ(c0·π₁ - (i/2) Σ_j a_j [∂_jπ₀, π₀])

    with c0 = ⟨φ, fφ⟩, a_j = ⟨φ, ∂_{r_j}f φ⟩. The general form evaluates
    c_bulk = ⟨φ, [f, π₁]₊ φ⟩ and c_boundary = -(i/2) Σ_j ⟨φ, [∂_jπ₀, ∂_{r_j}f] φ⟩
    as written; the self-adjoint form uses 2 Re⟨fφ, π₁φ⟩ and -Σ_j Im⟨φ, ∂_{r_j}f ψ_j⟩.
    """
    r = np.asarray(r, dtype=float)
    data = _data(geometry, k, band)
    evaluate = observable.evaluate if isinstance(observable, ProductObservable) else observable
    F, dF = evaluate(data, r)

    phi, B = data.phi, data.B
    pi0 = data.projection()
    pi1 = pi1_matrix(data, modulation, r)
    d = len(r)
    psi = data.derivatives if np.any(dF) else np.zeros((len(phi), d), dtype=complex)

    c0 = data.inner(phi, F @ phi)
    grads = np.array([data.inner(phi, dF[j] @ phi) for j in range(d)])

    if form == "general":
        bulk = data.inner(phi, (F @ pi1 + pi1 @ F) @ phi)
        boundary = 0j
        for j in range(d):
            dpi0 = np.outer(psi[:, j], phi.conj() @ B) + np.outer(phi, psi[:, j].conj() @ B)
            boundary += -0.5j * data.inner(phi, (dpi0 @ dF[j] - dF[j] @ dpi0) @ phi)
    elif form == "selfadjoint":
        if np.linalg.norm(B @ F - (B @ F).conj().T) > 1e-10 * max(1.0, np.linalg.norm(B @ F)):
            raise ValueError("observable is not self-adjoint")
        bulk = 2 * data.inner(F @ phi, pi1 @ phi).real
        boundary = -sum(data.inner(phi, dF[j] @ psi[:, j]).imag for j in range(d))
    else:
        raise ValueError(f"unknown form '{form}'")

    commutators = [
        (np.outer(psi[:, j], phi.conj()) - np.outer(phi, psi[:, j].conj())) @ B for j in range(d)
    ]
    offdiagonal = c0 * pi1 - 0.5j * sum(a * c for a, c in zip(grads, commutators))

    terms = {
        "leading": c0 * pi0,
        "bulk": lam * bulk * pi0,
        "boundary": lam * boundary * pi0,
        "offdiagonal": lam * offdiagonal,
    }
    value = sum(terms.values())
    coefficients = {"leading": c0, "bulk": bulk, "boundary": boundary, "gradient": grads}
    return SymbolMatrix(
        r, data.k, value, "O(lambda)" if lam else "O(1)", B, terms, coefficients
    )


def assemble_fro(data: FiberData, pi1: np.ndarray, lam: float, coefficients) -> np.ndarray:
    """Rebuild f_ro from the matrices of ``data`` with replacement scalar coefficients."""
    c0, bulk, boundary, grads = (
        coefficients["leading"],
        coefficients["bulk"],
        coefficients["boundary"],
        np.asarray(coefficients["gradient"]),
    )
    phi, B = data.phi, data.B
    psi = data.derivatives if np.any(grads) else None
    value = (c0 + lam * (bulk + boundary)) * data.projection() + lam * c0 * pi1
    if psi is not None:
        for j, a in enumerate(grads):
            comm = (np.outer(psi[:, j], phi.conj()) - np.outer(phi, psi[:, j].conj())) @ B
            value = value - 0.5j * lam * a * comm
    return value


# --- Dispersion ---


@dataclass(frozen=True)
class Dispersion:
    omega0: np.ndarray
    omega1: np.ndarray
    value: np.ndarray
    grad_r: np.ndarray
    grad_k: np.ndarray


def dispersion(bands: BandData, modulation: ModulationProfile, r, k, lam: float) -> Dispersion:
    """Ω = τ²ω - λτ²P·∇ln(τ_ε/τ_μ) with both gradients, vectorized over leading axes."""
    r = np.asarray(r, dtype=float)
    d = r.shape[-1]
    T = np.asarray(modulation.tau_squared(r))
    dT = modulation.tau_squared_gradient(r)
    w = np.asarray(bands.omega(k), dtype=float)
    v = np.asarray(bands.velocity(k), dtype=float)

    omega0 = T * w
    grad_r = dT * w[..., None]
    grad_k = T[..., None] * v

    g = modulation.coupling(r)
    if np.any(g):
        P = np.asarray(bands.poynting(k))[..., :d]
        Pg = np.sum(P * g, axis=-1)
        H = modulation.coupling_hessian(r)
        J = np.asarray(bands.poynting_jacobian(k))[..., :d, :]
        omega1 = -T * Pg
        grad_r = grad_r + lam * (-dT * Pg[..., None] - T[..., None] * np.einsum("...ij,...j->...i", H, P))
        grad_k = grad_k + lam * (-T[..., None] * np.einsum("...aj,...a->...j", J, g))
    else:
        omega1 = np.zeros_like(omega0)

    return Dispersion(omega0, omega1, omega0 + lam * omega1, grad_r, grad_k)
