"""Reference dynamics on a periodized supercell.

The field lives on n_i = L_i·s samples per axis (L_i cells, s odd samples per
cell). Microscopic positions start at the origin; the macroscopic coordinate
is r = λ(x - c) with c the corner of the central cell. The FFT index m along
an axis is split as m = p + L·g, with g taken in the centered range, so that
mode m carries the wavevector (p/L + g)·b and each block of fixed p is
exactly the grid-basis fiber at k = (p/L)·b.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Literal, Sequence

import numpy as np
import scipy.fft
import scipy.linalg

from .bloch import assemble_fiber, mass_matrix, rot_blocks, sector_block, solve_fiber, unit
from .errors import LatticeMismatchError, PeriodizationError, PropagationError, WeightError
from .geometry import FiberData, pi1_row
from .lattice import PlaneWaveBasis, Sector, grid_basis
from .materials import MaterialWeights
from .modulation import Constant, ModulationProfile, Profile

logger = logging.getLogger(__name__)


def _signed(m: np.ndarray, n: int) -> np.ndarray:
    return np.where(m <= (n - 1) // 2, m, m - n)


def _reduced_modes(cells: Sequence[int], samples: int) -> np.ndarray:
    """Reduced wavevector p/L + g of every FFT mode, shape (*shape, d)."""
    axes = []
    for L in cells:
        m = np.arange(L * samples)
        axes.append((m % L) / L + _signed(m // L, samples))
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


@dataclass(frozen=True, eq=False)
class SupercellOperator:
    """M_λ = S(λx)⁻²·W·Rot on the supercell grid, with S⁻² = diag(τ_ε², τ_μ²)."""

    weights: MaterialWeights
    grid_weights: MaterialWeights
    modulation: ModulationProfile
    lam: float
    cells: tuple[int, ...]
    samples: int
    basis: PlaneWaveBasis
    rot: np.ndarray = field(repr=False)
    W: np.ndarray = field(repr=False)
    W_inv: np.ndarray = field(repr=False)
    scale: np.ndarray = field(repr=False)
    r: np.ndarray = field(repr=False)
    _fibers: dict = field(default_factory=dict, repr=False)

    @property
    def lattice(self):
        return self.weights.lattice

    @property
    def ndim(self) -> int:
        return len(self.cells)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(L * self.samples for L in self.cells)

    @property
    def ncomp(self) -> int:
        return self.basis.ncomp

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.cells))

    @property
    def dV(self) -> float:
        return self.lattice.volume / self.samples**self.ndim

    @property
    def center(self) -> np.ndarray:
        return self.lattice.position([L // 2 for L in self.cells])

    @property
    def _axes(self) -> tuple[int, ...]:
        return tuple(range(self.ndim))

    # --- Pointwise and spectral pieces ---

    def fft(self, psi: np.ndarray) -> np.ndarray:
        return scipy.fft.fftn(psi, axes=self._axes, norm="forward")

    def ifft(self, coeffs: np.ndarray) -> np.ndarray:
        return scipy.fft.ifftn(coeffs, axes=self._axes, norm="forward")

    def curl(self, psi: np.ndarray) -> np.ndarray:
        """Rot Ψ by spectral differentiation."""
        return self.ifft(np.einsum("...ab,...b->...a", self.rot, self.fft(psi)))

    def weight_apply(self, v: np.ndarray) -> np.ndarray:
        """W_λ v = S⁻² W v."""
        return self.scale * np.einsum("...ab,...b->...a", self.W, v)

    def metric_apply(self, v: np.ndarray) -> np.ndarray:
        """W_λ⁻¹ v = W⁻¹ S² v."""
        return np.einsum("...ab,...b->...a", self.W_inv, v / self.scale)

    def apply(self, psi: np.ndarray) -> np.ndarray:
        return self.weight_apply(self.curl(psi))

    def inner(self, a: np.ndarray, b: np.ndarray) -> complex:
        return complex(self.dV * np.vdot(a, self.metric_apply(b)))

    def norm(self, psi: np.ndarray) -> float:
        return math.sqrt(max(self.inner(psi, psi).real, 0.0))

    def scale_field(self, psi: np.ndarray, power: float) -> np.ndarray:
        """S^power Ψ; S = diag(1/τ_ε, 1/τ_μ)."""
        return psi * self.scale ** (-power / 2)

    # --- Bloch decomposition ---

    @cached_property
    def _raw(self) -> tuple[np.ndarray, ...]:
        m = np.mod(self.basis.miller, self.samples)
        return tuple(m[:, i] for i in range(self.ndim))

    def _split(self, coeffs: np.ndarray) -> np.ndarray:
        s, d = self.samples, self.ndim
        shape = []
        for L in self.cells:
            shape += [s, L]
        arr = coeffs.reshape(shape + [self.ncomp])
        order = [2 * i + 1 for i in range(d)] + [2 * i for i in range(d)] + [2 * d]
        return arr.transpose(order)

    def _merge(self, arr: np.ndarray) -> np.ndarray:
        d = self.ndim
        order = []
        for i in range(d):
            order += [d + i, i]
        return arr.transpose(order + [2 * d]).reshape(self.shape + (self.ncomp,))

    def to_fibers(self, psi: np.ndarray) -> np.ndarray:
        """Fiber coefficient vectors, shape (*cells, dim)."""
        arr = self._split(self.fft(psi))
        index = (slice(None),) * self.ndim + self._raw
        return arr[index].reshape(self.cells + (self.basis.dim,))

    def from_fibers(self, fibers: np.ndarray) -> np.ndarray:
        d, s = self.ndim, self.samples
        arr = np.zeros(self.cells + (s,) * d + (self.ncomp,), dtype=complex)
        index = (slice(None),) * d + self._raw
        arr[index] = fibers.reshape(self.cells + (self.basis.size, self.ncomp))
        return self.ifft(self._merge(arr))

    def fiber_k(self, p: Sequence[int]) -> np.ndarray:
        return self.lattice.cartesian(np.asarray(p, dtype=float) / np.asarray(self.cells))

    def fiber_indices(self) -> list[tuple[int, ...]]:
        return list(itertools.product(*(range(L) for L in self.cells)))

    @cached_property
    def mass(self) -> np.ndarray:
        return mass_matrix(self.grid_weights, self.basis)

    def fiber(self, p: Sequence[int], band: int) -> FiberData:
        key = (tuple(int(x) for x in p), band)
        if key not in self._fibers:
            fiber = assemble_fiber(self.grid_weights, self.basis, self.fiber_k(key[0]), mass=self.mass)
            self._fibers[key] = FiberData(solve_fiber(fiber), band)
        return self._fibers[key]

    def embed(self, p: Sequence[int], phi: np.ndarray) -> np.ndarray:
        """The Bloch wave with fiber coefficients φ at k_p."""
        fibers = np.zeros(self.cells + (self.basis.dim,), dtype=complex)
        fibers[tuple(p)] = phi
        return self.from_fibers(fibers)

    def circular_shift(self, v: np.ndarray, miller) -> np.ndarray:
        """Coefficients at k + m·b of the state with coefficients v at k.

        Grid-basis modes alias modulo s, so the shift is a cyclic permutation.
        """
        s = self.samples
        target = np.mod(self.basis.miller + np.asarray(miller, dtype=int), s)
        lookup = {tuple(m): i for i, m in enumerate(np.mod(self.basis.miller, s))}
        src = np.array([lookup[tuple(t)] for t in target])
        modes = v.reshape(self.basis.size, self.ncomp)
        return modes[src].reshape(v.shape)

    # --- Cells and boundary ---

    def cell_blocks(self, psi: np.ndarray) -> np.ndarray:
        """Samples grouped by cell, shape (*cells, s^d·ncomp)."""
        d, s = self.ndim, self.samples
        shape = []
        for L in self.cells:
            shape += [L, s]
        arr = psi.reshape(shape + [self.ncomp])
        order = [2 * i for i in range(d)] + [2 * i + 1 for i in range(d)] + [2 * d]
        return arr.transpose(order).reshape(self.cells + (-1,))

    def cell_sums(self, density: np.ndarray) -> np.ndarray:
        d, s = self.ndim, self.samples
        shape = []
        for L in self.cells:
            shape += [L, s]
        return density.reshape(shape).sum(axis=tuple(2 * i + 1 for i in range(d)))

    def boundary_mask(self, layer: int = 1) -> np.ndarray:
        """Grid points in the outer ``layer`` cells of every axis with more than 2·layer cells."""
        cell = np.indices(self.shape) // self.samples
        mask = np.zeros(self.shape, dtype=bool)
        for i, L in enumerate(self.cells):
            if L > 2 * layer:
                mask |= (cell[i] < layer) | (cell[i] >= L - layer)
        return mask

    def boundary_variation(self) -> dict[str, float]:
        mask = self.boundary_mask()
        if not mask.any():
            mask = np.ones(self.shape, dtype=bool)
        r = self.r[mask]
        out = {}
        for name, profile in (("tau_eps", self.modulation.epsilon), ("tau_mu", self.modulation.mu)):
            v = profile.value(r)
            out[name] = float(np.max(v) - np.min(v))
        return out


def _tile(weights: MaterialWeights, samples: int, cells: tuple[int, ...], components) -> np.ndarray:
    d = len(cells)
    per_cell = np.broadcast_to(weights.samples, (samples,) * d + (6, 6))
    tiled = np.tile(per_cell, cells + (1, 1))
    return sector_block(tiled, components)


def build_supercell(
    weights: MaterialWeights,
    modulation: ModulationProfile,
    lam: float,
    cells: int | Sequence[int],
    samples: int,
    *,
    sector: Sector = "full",
    check: bool = True,
    tol: float = 1e-8,
) -> SupercellOperator:
    lattice = weights.lattice
    d = lattice.dimension
    cells = (int(cells),) * d if isinstance(cells, int) else tuple(int(L) for L in cells)
    if len(cells) != d or any(L < 1 for L in cells):
        raise ValueError(f"need {d} positive cell counts, got {cells}")
    if lam < 0:
        raise ValueError("lambda must be non-negative")

    basis = grid_basis(lattice, samples, sector)
    grid_weights = weights.resample((samples,) * d)

    chi = np.max(np.abs(grid_weights.samples[..., :3, 3:]))
    if chi > 1e-14 and modulation.mode != "scalar" and not modulation.is_constant:
        raise WeightError("bianisotropic weights need a scalar modulation")

    shape = tuple(L * samples for L in cells)
    # positions x_j = Σ_i (j_i/s) a_i
    grids = np.meshgrid(*(np.arange(n) / samples for n in shape), indexing="ij")
    x = lattice.position(np.stack(grids, axis=-1))
    center = lattice.position([L // 2 for L in cells])
    r = lam * (x - center)

    W_inv = _tile(grid_weights, samples, cells, basis.components)
    W = np.linalg.inv(W_inv)

    tau2 = np.stack([modulation.tau_eps(r) ** 2] * 3 + [modulation.tau_mu(r) ** 2] * 3, axis=-1)
    scale = tau2[..., list(basis.components)]

    kvec = lattice.cartesian(_reduced_modes(cells, samples))
    rot = sector_block(rot_blocks(lattice.embed(kvec)), basis.components)

    op = SupercellOperator(
        weights, grid_weights, modulation, lam, cells, samples, basis, rot, W, W_inv, scale, r
    )

    if check:
        variation = op.boundary_variation()
        if max(variation.values()) > tol:
            raise PeriodizationError(
                "modulation still varies at the supercell boundary: "
                + ", ".join(f"{k}={v:.3e}" for k, v in variation.items()),
                variation,
            )

    logger.debug("supercell %s x %d samples, grid %s", cells, samples, shape)
    return op


# --- Propagation ---


@dataclass(frozen=True)
class _KrylovStep:
    psi: np.ndarray
    error: float
    size: int
    breakdown: bool


def _krylov_step(op: SupercellOperator, psi: np.ndarray, h: float, m: int) -> _KrylovStep:
    """e^{-ihM}ψ from an m-step Lanczos basis orthogonal in the weighted product."""
    beta0 = op.norm(psi)
    if beta0 == 0:
        return _KrylovStep(psi.copy(), 0.0, 0, True)

    V = [psi / beta0]
    alpha, beta = [], []
    breakdown = False
    for j in range(m):
        w = op.apply(V[j])
        alpha.append(op.inner(V[j], w).real)
        w = w - alpha[j] * V[j]
        if j > 0:
            w = w - beta[j - 1] * V[j - 1]
        for v in V:
            w = w - op.inner(v, w) * v
        b = op.norm(w)
        beta.append(b)
        if b < 1e-12 * max(1.0, abs(alpha[j])):
            breakdown = True
            break
        if j + 1 < m:
            V.append(w / b)

    size = len(alpha)
    if size == 1:
        evals, evecs = np.array(alpha), np.ones((1, 1))
    else:
        evals, evecs = scipy.linalg.eigh_tridiagonal(np.array(alpha), np.array(beta[: size - 1]))
    c = evecs @ (np.exp(-1j * h * evals) * evecs[0])
    out = beta0 * sum(cj * v for cj, v in zip(c, V))
    error = 0.0 if breakdown else beta0 * beta[size - 1] * abs(c[size - 1])
    return _KrylovStep(out, float(error), size, breakdown)


def propagate(
    op: SupercellOperator,
    psi0: np.ndarray,
    t: float,
    tol: float = 1e-10,
    *,
    krylov_dim: int = 30,
    max_substeps: int = 10000,
    microscopic: bool = False,
) -> np.ndarray:
    """Ψ(t) = e^{-i(t/λ)M_λ}Ψ₀ for macroscopic t, or e^{-itM_λ}Ψ₀ when ``microscopic``.

    Substeps are halved until the Lanczos error estimate is below tol·h/|t|.
    """
    if not np.isfinite(t):
        raise ValueError("propagation time must be finite")
    if not microscopic and op.lam == 0:
        raise ValueError("macroscopic time needs lambda > 0")

    total = t if microscopic else t / op.lam
    psi = np.array(psi0, dtype=complex)
    if total == 0:
        return psi

    done, h, attempts, accepted = 0.0, total, 0, 0
    while abs(total - done) > 1e-14 * abs(total):
        h = math.copysign(min(abs(h), abs(total - done)), total)
        step = _krylov_step(op, psi, h, krylov_dim)
        attempts += 1
        if attempts > max_substeps:
            raise PropagationError(
                f"Krylov tolerance {tol:g} not met within {max_substeps} substeps "
                f"(reached t={done:.6g} of {total:.6g})"
            )
        if step.breakdown or step.error <= tol * abs(h) / abs(total):
            psi = step.psi
            done += h
            accepted += 1
            if step.error < 0.1 * tol * abs(h) / abs(total):
                h *= 1.5
        else:
            h /= 2

    logger.debug("propagated %.4g microscopic time in %d substeps (%d attempts)", total, accepted, attempts)
    return psi


# --- Observables ---


type Flavor = Literal["A", "M"]

KINDS = ("energy", "poynting", "amplitudeE", "stress", "angular_momentum", "symbol", "flux")


@dataclass(frozen=True, eq=False)
class ObservableDescriptor:
    """kind with region ρ(r); ``indices`` picks components (n), (j, n) or (axis,)."""

    kind: str
    rho: Profile = field(default_factory=Constant)
    indices: tuple[int, ...] = ()
    flavor: Flavor = "A"
    symbol: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown observable kind '{self.kind}'")
        if self.kind == "symbol" and self.symbol is None:
            raise ValueError("a symbol observable needs a momentum symbol g(k)")
        if self.flavor not in ("A", "M"):
            raise ValueError(f"unknown angular-momentum flavor '{self.flavor}'")


@dataclass(frozen=True, eq=False)
class QuantizedObservable:
    """Op(f) through its density D = W_λ⁻¹·Op(f), which is Hermitian on plain samples."""

    op: SupercellOperator
    descriptor: ObservableDescriptor
    form: Callable[[np.ndarray], np.ndarray] = field(repr=False)

    def apply(self, psi: np.ndarray) -> np.ndarray:
        return self.op.weight_apply(self.form(psi))

    def hermiticity_defect(self, pairs: int = 20, seed: int = 0) -> float:
        rng = np.random.default_rng(seed)
        shape = self.op.shape + (self.op.ncomp,)
        worst = 0.0
        for _ in range(pairs):
            a = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
            b = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
            lhs = np.vdot(a, self.form(b))
            rhs = np.conj(np.vdot(b, self.form(a)))
            worst = max(worst, abs(lhs - rhs) / max(1.0, abs(lhs)))
        return float(worst)


def _pointwise(blocks: np.ndarray, psi: np.ndarray) -> np.ndarray:
    return np.einsum("...ab,...b->...a", blocks, psi)


def _levi_civita(axis: int) -> list[tuple[int, int, int]]:
    """(a, b, sign) with ε_{axis,a,b} = sign ≠ 0."""
    a, b = (axis + 1) % 3, (axis + 2) % 3
    return [(a, b, 1), (b, a, -1)]


def quantize_observable(op: SupercellOperator, descriptor: ObservableDescriptor) -> QuantizedObservable:
    """Symmetrized quantization ½(Op(ρ)Op(g) + Op(g)Op(ρ)) of product symbols."""
    comps = op.basis.components
    rho = descriptor.rho.value(op.r)[..., None]
    kind, idx = descriptor.kind, descriptor.indices

    def block(b6):
        return sector_block(b6, comps)

    if kind == "energy":
        form = lambda psi: rho * op.metric_apply(psi)

    elif kind == "poynting":
        (n,) = idx
        J = block(rot_blocks(unit(n)))
        form = lambda psi: rho * _pointwise(J, psi)

    elif kind == "amplitudeE":
        (n,) = idx
        if n not in comps:
            raise ValueError(f"component E_{n} is not in the '{op.basis.sector}' sector")
        P = np.zeros((6, 6))
        P[n, n] = 1.0
        P = block(P)
        form = lambda psi: rho * _pointwise(P, psi)

    elif kind == "stress":
        j, n = idx
        q = 0.5 * (np.outer(unit(j), unit(n)) + np.outer(unit(n), unit(j)))
        if j == n:
            q = q - 0.5 * np.eye(3)
        Q = block(np.kron(np.eye(2), q))
        form = lambda psi: rho * _pointwise(Q, psi)

    elif kind == "angular_momentum":
        (axis,) = idx
        r3 = op.lattice.embed(op.r)
        density = np.zeros(op.shape + (len(comps),) * 2, dtype=complex)
        for a, b, sign in _levi_civita(axis):
            Jb = block(rot_blocks(unit(b)))
            if descriptor.flavor == "M":
                Winv = np.einsum("...ab,...b->...ab", op.W_inv, 1 / op.scale)
                Jb = np.einsum("...ab,bc,...cd->...ad", np.conj(np.swapaxes(Winv, -1, -2)), Jb, Winv)
            density = density + sign * (rho[..., 0] * r3[..., a])[..., None, None] * 0.5 * Jb
        form = lambda psi: _pointwise(density, psi)

    elif kind == "symbol":
        g = descriptor.symbol(kappa(op))[..., None]

        def form(psi):
            sym = 0.5 * (rho * op.ifft(g * op.fft(psi)) + op.ifft(g * op.fft(rho * psi)))
            return op.metric_apply(sym)

    else:  # flux
        grad = descriptor.rho.gradient(op.r)
        J = sum(grad[..., n, None, None] * block(rot_blocks(unit(n))) for n in range(op.ndim))
        form = lambda psi: -_pointwise(J, psi)

    return QuantizedObservable(op, descriptor, form)


def expectation(psi: np.ndarray, observable: QuantizedObservable) -> float:
    """Re⟨Ψ, W_λ⁻¹·Op(f)Ψ⟩; the identity gives ‖Ψ‖²_w."""
    return float((observable.op.dV * np.vdot(psi, observable.form(psi))).real)


# --- Weyl oracle ---


def kappa(op: SupercellOperator) -> np.ndarray:
    """Cartesian wavevector of every FFT mode, shape (*shape, d)."""
    return op.lattice.cartesian(_reduced_modes(op.cells, op.samples))


def weyl_apply(
    op: SupercellOperator,
    rho: Profile,
    g: Callable[[np.ndarray], np.ndarray],
    psi: np.ndarray,
    *,
    cutoff: float = 1e-14,
) -> np.ndarray:
    """Discrete Weyl quantization of ρ(r)·g(k) by double Fourier sums.

    (Op_W Ψ)^_m = Σ_δ ρ̂_δ g(κ_m - κ_δ/2) Ψ̂_{m-δ}, summed over the harmonics of
    ρ(λx) above ``cutoff``. Slow; meant as a test oracle.
    """
    a = op.fft(rho.value(op.r))
    k = kappa(op)
    psi_hat = op.fft(psi)
    out = np.zeros_like(psi_hat)

    significant = np.argwhere(np.abs(a) > cutoff * np.max(np.abs(a)))
    for delta in significant:
        signed = np.array([_signed(dm, n) for dm, n in zip(delta, op.shape)], dtype=float)
        k_delta = op.lattice.cartesian(signed / np.asarray(op.cells))
        shifted = np.roll(psi_hat, shift=tuple(int(x) for x in delta), axis=op._axes)
        out += a[tuple(delta)] * g(k - 0.5 * k_delta)[..., None] * shifted
    return op.ifft(out)


# --- Band projection ---


def _check_commensurate(op: SupercellOperator, basis: PlaneWaveBasis | None):
    if basis is not None and (not basis.lattice.matches(op.lattice) or basis.sector != op.basis.sector):
        raise LatticeMismatchError("band data is incommensurate with the supercell")


def project_band(
    op: SupercellOperator,
    psi: np.ndarray,
    band: int,
    order: int = 0,
    *,
    r0=None,
    basis: PlaneWaveBasis | None = None,
) -> np.ndarray:
    """Fiberwise π₀(k) (+ λπ₁(r₀, k) at order 1) applied to SΨ, mapped back by S⁻¹.

    π₁ is frozen at the single point ``r0`` for every fiber. This is the
    slowly-varying approximation: it matches the local projection for states
    concentrated within O(1) of r0 and loses accuracy at O(λ·|r - r0|) elsewhere.
    Center r0 on the wavepacket.
    """
    if order not in (0, 1):
        raise ValueError("order must be 0 or 1")
    _check_commensurate(op, basis)

    phi_field = op.scale_field(psi, 1)
    fibers = op.to_fibers(phi_field)
    r0 = np.zeros(op.ndim) if r0 is None else np.asarray(r0, dtype=float)

    out = np.zeros_like(fibers)
    for p in op.fiber_indices():
        data = op.fiber(p, band)
        v = fibers[p]
        coeff = data.phi.conj() @ (data.B @ v)
        out[p] = coeff * data.phi
        if order == 1 and op.lam:
            row = pi1_row(data, op.modulation, r0)
            # π₁ v = φ (ℓ v) + B⁻¹ℓ^H (φ^H B v)
            out[p] += op.lam * (data.phi * (row @ v) + data.solve_mass(row.conj()) * coeff)
    return op.scale_field(op.from_fibers(out), -1)


def commutator_defect(
    op: SupercellOperator,
    psi: np.ndarray,
    band: int,
    t: float,
    order: int = 0,
    *,
    r0=None,
    tol: float = 1e-10,
) -> float:
    """‖e^{-i(t/λ)M_λ}ΠΨ - Πe^{-i(t/λ)M_λ}Ψ‖_w."""
    a = propagate(op, project_band(op, psi, band, order, r0=r0), t, tol)
    b = project_band(op, propagate(op, psi, t, tol), band, order, r0=r0)
    return op.norm(a - b)
