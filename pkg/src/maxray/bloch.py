"""Bloch fibers of the periodic Maxwell operator and their spectra.

Each fiber is the generalized Hermitian problem R(k) φ = ω B φ, where R is
the curl in the plane-wave basis and B the convolution by Ŵ⁻¹, i.e. the Gram
matrix of the weighted energy product. Vectors are mode-major: the entry
``g * ncomp + c`` is component ``c`` of plane wave ``g``.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
import scipy.integrate
import scipy.linalg
import scipy.optimize

from .errors import LatticeMismatchError, SolverError, SymmetryNotApplicable
from .lattice import KGrid, KPath, PlaneWaveBasis, planewave_set
from .materials import MaterialWeights

logger = logging.getLogger(__name__)


def cross_matrix(q) -> np.ndarray:
    """Matrix of v ↦ q × v, shape (..., 3, 3)."""
    q = np.asarray(q)
    out = np.zeros(q.shape[:-1] + (3, 3), dtype=q.dtype)
    out[..., 0, 1], out[..., 0, 2] = -q[..., 2], q[..., 1]
    out[..., 1, 0], out[..., 1, 2] = q[..., 2], -q[..., 0]
    out[..., 2, 0], out[..., 2, 1] = -q[..., 1], q[..., 0]
    return out


def rot_blocks(q) -> np.ndarray:
    """[[0, -q×], [q×, 0]] per wavevector, shape (..., 6, 6)."""
    x = cross_matrix(q)
    out = np.zeros(x.shape[:-2] + (6, 6), dtype=x.dtype)
    out[..., :3, 3:] = -x
    out[..., 3:, :3] = x
    return out


def spin_blocks(q) -> np.ndarray:
    """[[0, q×], [q×, 0]] per vector, shape (..., 6, 6)."""
    x = cross_matrix(q)
    out = np.zeros(x.shape[:-2] + (6, 6), dtype=x.dtype)
    out[..., :3, 3:] = x
    out[..., 3:, :3] = x
    return out


def sector_block(blocks: np.ndarray, components: Sequence[int]) -> np.ndarray:
    c = np.asarray(components)
    return blocks[..., c[:, None], c[None, :]]


def unit(j: int) -> np.ndarray:
    e = np.zeros(3)
    e[j] = 1.0
    return e


def current_matrix(basis: PlaneWaveBasis, j: int) -> np.ndarray:
    """∂R/∂k_j, the same constant block on every mode."""
    block = sector_block(rot_blocks(unit(j)), basis.components)
    return np.kron(np.eye(basis.size), block)


def spin_matrix(basis: PlaneWaveBasis, j: int) -> np.ndarray:
    """[[0, e_j×], [e_j×, 0]] on every mode; ⟨φ, B⁻¹E_j φ⟩_w = φ^H E_j φ."""
    block = sector_block(spin_blocks(unit(j)), basis.components)
    return np.kron(np.eye(basis.size), block)


def apply_block(block: np.ndarray, basis: PlaneWaveBasis, v: np.ndarray) -> np.ndarray:
    """Apply one 6x6 block to every mode of a fiber vector without forming the kron."""
    blk = sector_block(block, basis.components)
    modes = np.asarray(v).reshape(basis.size, basis.ncomp, -1)
    return np.einsum("ab,gbn->gan", blk, modes).reshape(np.shape(v))


def field_components(basis: PlaneWaveBasis, v: np.ndarray) -> np.ndarray:
    """Per-mode six-component field, shape (size, 6); missing sector entries are zero."""
    out = np.zeros((basis.size, 6), dtype=complex)
    out[:, list(basis.components)] = np.asarray(v).reshape(basis.size, basis.ncomp)
    return out


def mass_matrix(weights: MaterialWeights, basis: PlaneWaveBasis) -> np.ndarray:
    if not basis.lattice.matches(weights.lattice):
        raise LatticeMismatchError("basis and weights live on different lattices")

    n = np.asarray(weights.shape)
    reach = 2 * np.max(np.abs(basis.miller), axis=0)
    if not weights.homogeneous and np.any(reach > n // 2):
        logger.warning(
            "weight grid %s resolves Miller differences up to %s, the basis needs %s; B may lose definiteness",
            tuple(n),
            tuple(n // 2),
            tuple(reach),
        )

    dm = basis.miller[:, None, :] - basis.miller[None, :, :]
    blocks = sector_block(weights.coefficient(dm), basis.components)
    M, nc = basis.size, basis.ncomp
    B = blocks.transpose(0, 2, 1, 3).reshape(M * nc, M * nc)
    return 0.5 * (B + B.conj().T)


@dataclass(frozen=True, eq=False)
class BlochFiber:
    k: np.ndarray
    R: np.ndarray = field(repr=False)
    B: np.ndarray = field(repr=False)
    basis: PlaneWaveBasis
    weights: MaterialWeights

    @property
    def dim(self) -> int:
        return self.basis.dim


def assemble_fiber(
    weights: MaterialWeights, basis: PlaneWaveBasis, k, *, mass: np.ndarray | None = None
) -> BlochFiber:
    k = np.asarray(k, dtype=float)
    if k.shape != (basis.lattice.dimension,) or not np.all(np.isfinite(k)):
        raise ValueError(f"k must be a finite {basis.lattice.dimension}-vector, got {k}")

    B = mass_matrix(weights, basis) if mass is None else mass
    q = basis.lattice.embed(k + basis.G)
    blocks = sector_block(rot_blocks(q), basis.components)
    R = scipy.linalg.block_diag(*blocks)
    return BlochFiber(k, R, B, basis, weights)


@dataclass(frozen=True, eq=False)
class FiberSolution:
    fiber: BlochFiber
    values: np.ndarray
    vectors: np.ndarray = field(repr=False)
    complete: bool = True

    @property
    def npos(self) -> int:
        return self.fiber.basis.positive_count(self.fiber.k)

    def index(self, n: int) -> int:
        """Column of positive band ``n`` (1-based) in the sorted spectrum."""
        if not self.complete:
            raise ValueError("band labels need the full spectrum; solve without a window")
        if not 1 <= n <= self.npos:
            raise ValueError(f"band {n} out of range 1..{self.npos}")
        return len(self.values) - self.npos + n - 1

    def band(self, n: int) -> tuple[float, np.ndarray]:
        i = self.index(n)
        return float(self.values[i]), self.vectors[:, i]

    def residual(self, n: int) -> float:
        w, phi = self.band(n)
        Bphi = self.fiber.B @ phi
        return float(np.linalg.norm(self.fiber.R @ phi - w * Bphi) / np.linalg.norm(Bphi))


def solve_fiber(
    fiber: BlochFiber,
    n_bands: int | None = None,
    window: tuple[float, float] | None = None,
) -> FiberSolution:
    if n_bands is not None and n_bands > fiber.dim:
        raise ValueError(f"asked for {n_bands} bands from a {fiber.dim}-dimensional fiber")

    try:
        L = scipy.linalg.cholesky(fiber.B, lower=True)
    except np.linalg.LinAlgError as e:
        raise SolverError(f"B not positive definite at k={fiber.k}", k=fiber.k) from e

    X = scipy.linalg.solve_triangular(L, fiber.R, lower=True)
    A = scipy.linalg.solve_triangular(L, X.conj().T, lower=True).conj().T
    A = 0.5 * (A + A.conj().T)

    if window is None:
        values, y = scipy.linalg.eigh(A)
    else:
        values, y = scipy.linalg.eigh(A, subset_by_value=window)

    vectors = scipy.linalg.solve_triangular(L, y, lower=True, trans="C")
    solution = FiberSolution(fiber, values, vectors, complete=window is None)

    if n_bands is not None and window is None and n_bands > solution.npos:
        raise ValueError(f"only {solution.npos} positive bands at k={fiber.k}")
    return solution


@dataclass(frozen=True, eq=False)
class BlochSolution:
    """Bands 1..nbands over a set of k-points, with the full spectra kept."""

    weights: MaterialWeights
    basis: PlaneWaveBasis
    kpoints: np.ndarray
    spectra: np.ndarray = field(repr=False)
    values: np.ndarray
    vectors: np.ndarray = field(repr=False)
    npos: np.ndarray
    labels: np.ndarray
    grid: KGrid | KPath | None = None

    @property
    def nbands(self) -> int:
        return self.values.shape[1]

    def positional(self, n: int) -> np.ndarray:
        return self.spectra.shape[1] - self.npos + n - 1

    def band_values(self, n: int) -> np.ndarray:
        return self.values[:, n - 1]

    def band_vectors(self, n: int) -> np.ndarray:
        return self.vectors[:, :, n - 1]


def _points(kpoints) -> np.ndarray:
    if isinstance(kpoints, (KGrid, KPath)):
        return kpoints.points
    return np.atleast_2d(np.asarray(kpoints, dtype=float))


def band_structure(
    weights: MaterialWeights,
    basis: PlaneWaveBasis,
    kpoints: KGrid | KPath | np.ndarray,
    n_bands: int,
    *,
    smooth: bool | None = None,
    threads: int | None = None,
) -> BlochSolution:
    points = _points(kpoints)
    mass = mass_matrix(weights, basis)

    def solve(item):
        i, k = item
        try:
            sol = solve_fiber(assemble_fiber(weights, basis, k, mass=mass), n_bands)
        except SolverError as e:
            raise SolverError(f"{e} (k-index {i})", k=k) from e
        idx = [sol.index(n) for n in range(1, n_bands + 1)]
        return sol.values, sol.values[idx], sol.vectors[:, idx], sol.npos

    with ThreadPoolExecutor(max_workers=threads) as pool:
        results = list(pool.map(solve, enumerate(points)))

    spectra = np.array([r[0] for r in results])
    values = np.array([r[1] for r in results])
    vectors = np.array([r[2] for r in results])
    npos = np.array([r[3] for r in results])
    labels = np.tile(np.arange(1, n_bands + 1), (len(points), 1))

    if smooth is None:
        smooth = isinstance(kpoints, KPath)
    if smooth:
        _connect(values, vectors, labels, mass)

    logger.debug("solved %d fibers of dimension %d", len(points), basis.dim)
    return BlochSolution(
        weights, basis, points, spectra, values, vectors, npos, labels,
        kpoints if isinstance(kpoints, (KGrid, KPath)) else None,
    )


def _connect(values, vectors, labels, mass):
    """Relabel by maximal overlap with the previous k, then align phases."""
    for i in range(1, len(values)):
        overlap = np.abs(vectors[i - 1].conj().T @ mass @ vectors[i])
        _, col = scipy.optimize.linear_sum_assignment(-overlap)
        values[i] = values[i][col]
        vectors[i] = vectors[i][:, col]
        labels[i] = labels[i][col]

        phase = np.einsum("gn,gh,hn->n", vectors[i - 1].conj(), mass, vectors[i])
        mag = np.abs(phase)
        vectors[i] *= np.where(mag > 0, np.conj(phase) / np.where(mag > 0, mag, 1), 1)


@dataclass(frozen=True)
class GapReport:
    band: int
    margin: float
    ground: float
    passed: bool
    worst_k: int


def check_gap(
    solution: BlochSolution, band: int, *, margin_floor: float = 1e-6, ground_floor: float = 1e-6
) -> GapReport:
    dim = solution.spectra.shape[1]
    margins, grounds = [], []

    for spectrum, i in zip(solution.spectra, solution.positional(band)):
        w = spectrum[i]
        below = w - spectrum[i - 1] if i > 0 else np.inf
        above = spectrum[i + 1] - w if i + 1 < dim else np.inf
        margins.append(min(below, above))
        grounds.append(abs(w))

    margins = np.asarray(margins)
    margin, ground = float(np.min(margins)), float(np.min(grounds))
    passed = margin > margin_floor and ground > ground_floor
    return GapReport(band, margin, ground, passed, int(np.argmin(margins)))


def _directed(a: np.ndarray, b: np.ndarray) -> float:
    i = np.clip(np.searchsorted(b, a), 1, len(b) - 1)
    return float(np.max(np.minimum(np.abs(a - b[i - 1]), np.abs(a - b[i]))))


def hausdorff(a, b) -> float:
    a, b = np.sort(np.asarray(a)), np.sort(np.asarray(b))
    return max(_directed(a, b), _directed(b, a))


def check_particle_hole(
    solution: BlochSolution, *, conjugate: bool = False, threads: int | None = None
) -> float:
    """Largest Hausdorff distance between σ(k) and -σ(-k) of the partner operator.

    Real weights are their own partner; gyrotropic weights are compared with
    the conjugate weights when ``conjugate`` is set.
    """
    weights, basis = solution.weights, solution.basis

    if weights.is_real:
        partner = weights
    elif conjugate:
        partner = weights.conjugate()
    else:
        raise SymmetryNotApplicable("symmetry not applicable: weights are gyrotropic")

    if not basis.is_negation_closed():
        raise ValueError("particle-hole check needs a basis closed under G -> -G")

    mass = mass_matrix(partner, basis)

    def defect(i):
        sol = solve_fiber(assemble_fiber(partner, basis, -solution.kpoints[i], mass=mass))
        return hausdorff(solution.spectra[i], -sol.values)

    with ThreadPoolExecutor(max_workers=threads) as pool:
        return max(pool.map(defect, range(len(solution.kpoints))))


@dataclass(frozen=True)
class DosTable:
    omega: np.ndarray
    density: np.ndarray
    nbands: int
    method: str

    def integral(self) -> float:
        return float(scipy.integrate.trapezoid(self.density, self.omega))


def dos_estimate(
    source: BlochSolution | np.ndarray,
    omega: np.ndarray | None = None,
    *,
    method: Literal["histogram", "gaussian"] = "histogram",
    width: float | None = None,
    bins: int = 200,
) -> DosTable:
    """Density of states normalized to the number of bands counted."""
    values = source.values if isinstance(source, BlochSolution) else np.asarray(source, float)
    values = values.reshape(len(values), -1)
    nk, nb = values.shape
    flat = np.sort(values.ravel())
    spacing = (flat[-1] - flat[0]) / max(len(flat) - 1, 1)

    if method == "histogram":
        counts, edges = np.histogram(flat, bins=bins if omega is None else omega)
        density = counts / (nk * np.diff(edges))
        centers = 0.5 * (edges[1:] + edges[:-1])
        resolution = float(np.min(np.diff(edges)))
        table = DosTable(centers, density, nb, method)
    elif method == "gaussian":
        if width is None or width <= 0:
            raise ValueError("gaussian smearing needs a positive width")
        if omega is None:
            omega = np.linspace(flat[0] - 3 * width, flat[-1] + 3 * width, bins)
        omega = np.asarray(omega, dtype=float)
        density = np.zeros_like(omega)
        norm = 1 / (np.sqrt(2 * np.pi) * width * nk)
        for start in range(0, len(flat), 16384):
            chunk = flat[start : start + 16384]
            density += norm * np.exp(-0.5 * ((omega[:, None] - chunk[None]) / width) ** 2).sum(1)
        resolution = width
        table = DosTable(omega, density, nb, method)
    else:
        raise ValueError(f"unknown DOS method '{method}'")

    if resolution < spacing:
        logger.warning(
            "DOS resolution %.3g is below the mean level spacing %.3g; refine the k-grid",
            resolution,
            spacing,
        )
    return table


def dos_exponent(table: DosTable, omega0: float, window: tuple[float, float]) -> float:
    """Fitted exponent a in D(ω) ≈ b (ω - ω₀)^a over the window of ω - ω₀."""
    x = table.omega - omega0
    mask = (x >= window[0]) & (x <= window[1]) & (table.density > 0)
    if mask.sum() < 2:
        raise ValueError("not enough positive DOS samples in the fit window")
    return float(np.polyfit(np.log(x[mask]), np.log(table.density[mask]), 1)[0])


def self_convergence(
    weights: MaterialWeights,
    kpoints,
    n_bands: int,
    gmax: float,
    *,
    sector="full",
    factor: float = 1.5,
    threads: int | None = None,
    coarse: BlochSolution | None = None,
) -> float:
    """Largest relative change of bands 1..n_bands when the cutoff grows by ``factor``.

    ``coarse`` reuses a solution already computed at ``kpoints`` with cutoff ``gmax``.
    """
    lattice = weights.lattice
    if coarse is None:
        coarse = band_structure(weights, planewave_set(lattice, gmax, sector), kpoints, n_bands, threads=threads)
    fine = band_structure(weights, planewave_set(lattice, factor * gmax, sector), kpoints, n_bands, threads=threads)
    values = coarse.values[:, :n_bands]
    return float(np.max(np.abs(fine.values - values) / np.abs(values)))
