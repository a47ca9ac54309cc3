"""Band-projected wavepackets and their reduced Wigner transform.

The transform acts on Φ = SΨ, the field seen by the periodic operator. It is
sampled on the product of the supercell's cells (r) and its discrete
Brillouin zone (k), so each phase-space bin carries the volume
λ^d·|cell| × |BZ|/N_cells and the bins sum exactly to ‖Ψ‖²_w.
"""

from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.fft

from .bloch import assemble_fiber, solve_fiber
from .errors import BoundaryMassError, ScaleSeparationError
from .geometry import SymbolMatrix, state_correction
from .lattice import Lattice, cell_points
from .rays import DispersionModel, Flow, Tolerances, push_ensemble
from .supercell import SupercellOperator, _signed, propagate

logger = logging.getLogger(__name__)

BOUNDARY_MASS_LIMIT = 1e-8


@dataclass(frozen=True, eq=False)
class FieldState:
    """A field Ψ on the supercell grid with its weighted norm."""

    op: SupercellOperator
    psi: np.ndarray = field(repr=False)
    norm: float

    @classmethod
    def from_field(cls, op: SupercellOperator, psi, *, normalize: bool = False) -> FieldState:
        psi = np.asarray(psi, dtype=complex)
        if psi.shape != op.shape + (op.ncomp,):
            raise ValueError(f"field must have shape {op.shape + (op.ncomp,)}, got {psi.shape}")
        norm = op.norm(psi)
        if normalize:
            if norm == 0:
                raise ValueError("cannot normalize a zero field")
            psi, norm = psi / norm, 1.0
        return cls(op, psi, norm)

    @property
    def lam(self) -> float:
        return self.op.lam

    def evolve(self, t: float, tol: float = 1e-10) -> FieldState:
        psi = propagate(self.op, self.psi, t, tol)
        norm = self.op.norm(psi)
        if abs(norm - self.norm) > 1e-9 * max(1.0, self.norm):
            logger.warning("weighted norm drifted from %.12g to %.12g", self.norm, norm)
        return FieldState(self.op, psi, norm)


# --- Construction ---


def _check_scales(op: SupercellOperator, width: float, proceed: bool):
    ratio = width / op.lam
    problems = []
    for i, L in enumerate(op.cells):
        a = float(np.linalg.norm(op.lattice.vectors[i]))
        if L == 1:
            continue
        if ratio < 2 * a:
            problems.append(f"axis {i}: width/lambda = {ratio:.3g} does not resolve the cell")
        if 8 * ratio > L * a:
            problems.append(f"axis {i}: packet of {8 * ratio:.3g} does not fit {L} cells")
    if not problems:
        return
    message = "scale separation violated: " + "; ".join(problems)
    if not proceed:
        raise ScaleSeparationError(message)
    logger.warning("%s (proceeding)", message)


def _reference(op: SupercellOperator, band: int, k0: np.ndarray) -> np.ndarray:
    fiber = assemble_fiber(op.grid_weights, op.basis, k0, mass=op.mass)
    return solve_fiber(fiber).band(band)[1]


def gaussian_bloch_state(
    op: SupercellOperator,
    band: int,
    r0,
    k0,
    width: float,
    order: int = 0,
    *,
    proceed: bool = False,
    cutoff: float = 1e-14,
) -> FieldState:
    """Unit-norm band-n wavepacket centred at (r₀, k₀) with macroscopic width σ_r.

    Amplitudes a(k) = exp(-|k - k₀|²/(4σ_k²)) with σ_k = λ/(2σ_r) multiply the
    band fibers at every supercell k, gauged against the fiber at k₀. Order 1
    adds λπ₁(r₀, k)φ(k). Fibers with amplitude below ``cutoff`` are skipped.
    """
    if order not in (0, 1):
        raise ValueError("order must be 0 or 1")
    if op.lam <= 0:
        raise ValueError("a wavepacket needs lambda > 0")
    if width <= 0:
        raise ValueError("width must be positive")

    r0 = np.asarray(r0, dtype=float)
    k0 = np.asarray(k0, dtype=float)
    _check_scales(op, width, proceed)

    sigma_k = op.lam / (2 * width)
    x0 = r0 / op.lam + op.center
    ref = _reference(op, band, k0)

    fibers = np.zeros(op.cells + (op.basis.dim,), dtype=complex)
    used = 0
    for p in op.fiber_indices():
        kp = op.fiber_k(p)
        dk, _ = op.lattice.wrap(kp - k0)
        a = math.exp(-float(dk @ dk) / (4 * sigma_k**2))
        if a < cutoff:
            continue
        kk = k0 + dk
        data = op.fiber(p, band)
        # the same Bloch function written at k0 + dk
        shift = np.rint(op.lattice.reduced(kk - kp)).astype(int)
        overlap = ref.conj() @ (op.mass @ op.circular_shift(data.phi, shift))
        gauge = np.conj(overlap) / abs(overlap) if abs(overlap) > 1e-12 else 1.0

        v = data.phi
        if order == 1:
            v = v + op.lam * state_correction(data, op.modulation, r0)
        fibers[p] = a * gauge * np.exp(-1j * float(kk @ x0)) * v
        used += 1

    psi = op.scale_field(op.from_fibers(fibers), -1)
    logger.debug("wavepacket band %d at k0=%s from %d of %d fibers", band, k0, used, op.n_cells)
    return FieldState.from_field(op, psi, normalize=True)


def boundary_mass(state: FieldState, layer: int = 1) -> float:
    """Fraction of the weighted norm in the outer ``layer`` cells."""
    op = state.op
    mask = op.boundary_mask(layer)
    if not mask.any():
        return 0.0
    density = np.sum(state.psi.conj() * op.metric_apply(state.psi), axis=-1).real
    return float(op.dV * density[mask].sum() / max(state.norm**2, 1e-300))


# --- Reduced Wigner transform ---


@dataclass(frozen=True, eq=False)
class WignerGrid:
    """w(r_b, k_p) on cells × zone points; values have shape (*cells, *cells)."""

    lattice: Lattice
    r: np.ndarray = field(repr=False)
    k: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    dr: float
    dk: float
    residue: float

    @property
    def ndim(self) -> int:
        return self.lattice.dimension

    def _r_axes(self) -> tuple[int, ...]:
        return tuple(range(self.ndim))

    def _k_axes(self) -> tuple[int, ...]:
        return tuple(range(self.ndim, 2 * self.ndim))

    def total(self) -> float:
        return float(self.values.sum() * self.dr * self.dk)

    def r_marginal(self) -> np.ndarray:
        return self.values.sum(axis=self._k_axes()) * self.dk

    def k_marginal(self) -> np.ndarray:
        return self.values.sum(axis=self._r_axes()) * self.dr

    def moments(self) -> dict[str, np.ndarray | float]:
        """Mass and first moments; ⟨k⟩ is taken around the k-marginal peak."""
        total = self.total()
        rm, km = self.r_marginal(), self.k_marginal()
        mean_r = np.einsum("...i,...->i", self.r, rm) * self.dr / total
        peak = self.k.reshape(-1, self.ndim)[int(np.argmax(km))]
        offsets, _ = self.lattice.wrap(self.k - peak)
        mean_k = peak + np.einsum("...i,...->i", offsets, km) * self.dk / total
        return {"total": total, "r": mean_r, "k": mean_k}

    def significant(self, threshold: float) -> np.ndarray:
        """Mask of bins with |w| above ``threshold`` times the peak."""
        return np.abs(self.values) > threshold * np.max(np.abs(self.values))

    def points(self) -> tuple[np.ndarray, np.ndarray]:
        """Phase-space points (M, 2d) = [r | k] and their quadrature weights (M,)."""
        d = self.ndim
        cells = self.values.shape[:d]
        r = np.broadcast_to(self.r.reshape(cells + (1,) * d + (d,)), self.values.shape + (d,))
        k = np.broadcast_to(self.k.reshape((1,) * d + cells + (d,)), self.values.shape + (d,))
        pts = np.concatenate([r.reshape(-1, d), k.reshape(-1, d)], axis=1)
        return pts, (self.values * self.dr * self.dk).ravel()


def _shifts(cells: Sequence[int]) -> list[tuple[int, ...]]:
    return list(itertools.product(*(range(-((L - 1) // 2), (L - 1) // 2 + 1) for L in cells)))


def _bins(op: SupercellOperator) -> tuple[np.ndarray, np.ndarray]:
    """Cell-centre macroscopic positions and centred zone points, each (*cells, d)."""
    idx = np.stack(np.meshgrid(*(np.arange(L) for L in op.cells), indexing="ij"), axis=-1)
    s = op.samples
    r = op.lam * (op.lattice.position(idx + (s - 1) / (2 * s)) - op.center)
    cells = np.asarray(op.cells)
    k = op.lattice.cartesian(_signed(idx, cells) / cells)
    return r, k


def reduced_wigner(state: FieldState, *, check: bool = True, threads: int | None = None) -> WignerGrid:
    """Weight-contracted Wigner transform by the symmetric lattice-shift sum.

    For every lattice shift γ the overlap Σ conj(Φ(x+γ))·W⁻¹Φ(x) is binned at
    the cell of x + γ/2; a Fourier sum over γ gives the zone dependence.
    """
    op = state.op
    if op.lam <= 0:
        raise ValueError("the Wigner transform needs lambda > 0")
    if check:
        mass = boundary_mass(state)
        if mass > BOUNDARY_MASS_LIMIT:
            raise BoundaryMassError(f"state has boundary mass {mass:.3e}", mass)

    d = op.ndim
    phi = op.scale_field(state.psi, 1)
    weighted = np.einsum("...ab,...b->...a", op.W_inv, phi)

    def overlap(gamma):
        upper = np.roll(phi, tuple(-g * op.samples for g in gamma), axis=tuple(range(d)))
        C = op.cell_sums(np.sum(upper.conj() * weighted, axis=-1))
        return gamma, op.dV * np.roll(C, tuple(g // 2 for g in gamma), axis=tuple(range(d)))

    A = np.zeros(op.cells + op.cells, dtype=complex)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for gamma, block in pool.map(overlap, _shifts(op.cells)):
            A[(slice(None),) * d + tuple(g % L for g, L in zip(gamma, op.cells))] = block

    spectrum = scipy.fft.ifftn(A, axes=tuple(range(d, 2 * d)), norm="forward")
    dr = op.lam**d * op.lattice.volume
    dk = op.lattice.zone_volume / op.n_cells
    w = spectrum / (dr * op.lattice.zone_volume)

    scale = float(np.max(np.abs(w.real))) or 1.0
    residue = float(np.max(np.abs(w.imag))) / scale
    r, k = _bins(op)
    logger.debug("Wigner grid %s, imaginary residue %.2e", w.shape, residue)
    return WignerGrid(op.lattice, r, k, w.real, dr, dk, residue)


# --- Phase-space quadrature ---


def phase_space_average(
    grid: WignerGrid,
    f: Callable[[np.ndarray, np.ndarray], np.ndarray],
    model: DispersionModel | None = None,
    flavor: str | Flow = "scalar",
    t: float = 0.0,
    *,
    tolerances: Tolerances | None = None,
    significant: float = 1e-10,
) -> float:
    """Σ f(Φ_t(r_i, k_i))·w_i; f takes arrays (M, d) and returns (M,).

    Only bins with |w| above ``significant`` times the peak are transported.
    """
    pts, weights = grid.points()
    d = grid.ndim
    if t == 0:
        return float(np.sum(np.asarray(f(pts[:, :d], pts[:, d:])) * weights))
    if model is None:
        raise ValueError("transport to t != 0 needs a dispersion model")

    keep = np.abs(weights) > significant * np.max(np.abs(weights))
    moved = push_ensemble(model, flavor, pts[keep], t, tolerances)
    return float(np.sum(np.asarray(f(moved.r, moved.k)) * weights[keep]))


def _dft_kernel(op: SupercellOperator, p) -> np.ndarray:
    """kron(D, I) with D[y, g] = exp(i(k_p + G_g)·y) over the cell samples y."""
    y = cell_points(op.lattice, (op.samples,) * op.ndim).reshape(-1, op.ndim)
    D = np.exp(1j * y @ (op.fiber_k(p) + op.basis.G).T)
    return np.kron(D, np.eye(op.ncomp))


type MatrixField = Callable[[tuple[int, ...], tuple[int, ...]], np.ndarray | SymbolMatrix | float]


def matrix_wigner_contract(
    state: FieldState,
    g: MatrixField,
    *,
    grid: WignerGrid | None = None,
    significant: float = 1e-10,
    threads: int | None = None,
) -> float:
    """Σ_{b,p} Re tr(g̃(r_b, k_p) X(r_b, k_p)) with the fiber-resolved Wigner matrix X.

    ``g(b, p)`` is the symbol in cell b (at grid.r[b]) and zone point p: a fiber
    matrix on the grid basis at k = op.fiber_k(p), or a scalar standing for that
    multiple of the identity. A scalar symbol reproduces ``phase_space_average`` exactly.
    """
    op = state.op
    grid = grid or reduced_wigner(state, threads=threads)
    d, cells = op.ndim, op.cells
    dim = op.basis.dim
    significant_bins = grid.significant(significant)

    phi = op.scale_field(state.psi, 1)
    blocks = op.cell_blocks(phi)
    weighted = op.cell_blocks(np.einsum("...ab,...b->...a", op.W_inv, phi))
    shifts = np.array(_shifts(cells), dtype=int)
    L = np.asarray(cells)
    norm = op.dV / op.n_cells

    def per_bin(b):
        pairs = np.argwhere(significant_bins[b])
        if not len(pairs):
            return 0.0
        lower = np.mod(np.asarray(b) - shifts // 2, L)
        upper = np.mod(lower + shifts, L)
        Y = blocks[tuple(lower.T)]
        Z = blocks[tuple(upper.T)]
        WY = weighted[tuple(lower.T)]
        total = 0.0
        for p in map(tuple, pairs):
            value = g(b, p)
            if isinstance(value, SymbolMatrix):
                value = value.value
            value = np.asarray(value)
            if value.ndim == 0:
                terms = value * np.einsum("gi,gi->g", Z.conj(), WY)
            else:
                if value.shape != (dim, dim):
                    raise ValueError(f"symbol matrix has shape {value.shape}, expected {(dim, dim)}")
                K = _dft_kernel(op, p)
                kernel = K @ (op.mass @ value) @ K.conj().T / op.samples**d
                terms = np.einsum("gi,ij,gj->g", Z.conj(), kernel, Y)
            phases = np.exp(2j * np.pi * (shifts @ (np.asarray(p) / L)))
            total += float(np.sum(phases * terms).real)
        return total * norm

    with ThreadPoolExecutor(max_workers=threads) as pool:
        return float(sum(pool.map(per_bin, itertools.product(*(range(n) for n in cells)))))
