"""Periodic material weights W⁻¹ = [[ε, χ], [χ^H, μ]] sampled on the unit cell."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.special

from .errors import WeightError
from .lattice import Lattice, cell_fft, cell_ifft, cell_points, square_lattice

logger = logging.getLogger(__name__)

HERMITIAN_TOL = 1e-12
REAL_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class MaterialWeights:
    lattice: Lattice
    samples: np.ndarray = field(repr=False)
    is_real: bool
    homogeneous: bool

    @classmethod
    def from_samples(
        cls, lattice: Lattice, samples, *, check: bool = True, floor: float = 1e-8
    ) -> MaterialWeights:
        samples = np.asarray(samples, dtype=complex)
        d = lattice.dimension

        if samples.ndim != d + 2 or samples.shape[-2:] != (6, 6):
            raise WeightError(f"expected samples of shape (n_1..n_{d}, 6, 6), got {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise WeightError("non-finite weight samples")

        if check:
            report = _inspect(samples, floor)
            if not report.passed:
                raise WeightError("; ".join(report.failures))
            samples = 0.5 * (samples + np.conj(np.swapaxes(samples, -1, -2)))

        flat = samples.reshape(-1, 6, 6)
        homogeneous = bool(np.max(np.abs(flat - flat[0])) < 1e-14)
        if homogeneous and flat.shape[0] > 1:
            samples = flat[:1].reshape((1,) * d + (6, 6))

        is_real = bool(np.max(np.abs(samples.imag)) < REAL_TOL)
        return cls(lattice, samples, is_real, homogeneous)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.samples.shape[:-2]

    @cached_property
    def coefficients(self) -> np.ndarray:
        return cell_fft(self.samples, self.lattice.dimension)

    @cached_property
    def inverse_samples(self) -> np.ndarray:
        """Samples of W itself."""
        return np.linalg.inv(self.samples)

    @cached_property
    def inverse_coefficients(self) -> np.ndarray:
        return cell_fft(self.inverse_samples, self.lattice.dimension)

    def coefficient(self, dm: np.ndarray) -> np.ndarray:
        """Ŵ⁻¹ at Miller differences dm (..., d); zero beyond the Nyquist index of the sample grid."""
        dm = np.asarray(dm, dtype=int)
        n = np.asarray(self.shape)
        inside = np.all(np.abs(dm) <= n // 2, axis=-1)
        idx = tuple(np.mod(dm[..., i], n[i]) for i in range(len(n)))
        return np.where(inside[..., None, None], self.coefficients[idx], 0.0)

    def conjugate(self) -> MaterialWeights:
        return MaterialWeights(self.lattice, np.conj(self.samples), self.is_real, self.homogeneous)

    def resample(self, shape: Sequence[int]) -> MaterialWeights:
        """Band-limited resampling onto another cell grid."""
        d = self.lattice.dimension
        shape = tuple(int(n) for n in shape)
        if len(shape) != d:
            raise WeightError(f"resample needs {d} axes, got {shape}")

        if self.homogeneous:
            samples = np.broadcast_to(self.samples, shape + (6, 6)).copy()
        else:
            coeffs = np.zeros(shape + (6, 6), dtype=complex)
            src = self.shape
            ranges = [
                range(-((min(a, b) - 1) // 2), (min(a, b) - 1) // 2 + 1)
                for a, b in zip(src, shape)
            ]
            for m in itertools.product(*ranges):
                dst_idx = tuple(mi % n for mi, n in zip(m, shape))
                src_idx = tuple(mi % n for mi, n in zip(m, src))
                coeffs[dst_idx] = self.coefficients[src_idx]
            samples = cell_ifft(coeffs, d)

        return MaterialWeights.from_samples(self.lattice, samples)


def _as_block(value, name: str) -> np.ndarray:
    block = np.asarray(value, dtype=complex)
    if block.ndim == 0:
        block = block * np.eye(3)
    if block.shape != (3, 3):
        raise WeightError(f"{name} must be a scalar or a 3x3 matrix")
    return block


def assemble(epsilon, mu=None, chi=None) -> np.ndarray:
    eps = _as_block(epsilon, "epsilon")
    mu = _as_block(1.0 if mu is None else mu, "mu")
    chi = _as_block(0.0 if chi is None else chi, "chi")
    return np.block([[eps, chi], [chi.conj().T, mu]])


def make_homogeneous(epsilon, mu=None, chi=None, *, lattice: Lattice | None = None) -> MaterialWeights:
    lattice = lattice or square_lattice()
    w = assemble(epsilon, mu, chi)
    samples = w.reshape((1,) * lattice.dimension + (6, 6))
    return MaterialWeights.from_samples(lattice, samples)


def vacuum(lattice: Lattice | None = None) -> MaterialWeights:
    return make_homogeneous(1.0, lattice=lattice)


def rod_profile(lattice: Lattice, radius: float, width: float, resolution: int) -> np.ndarray:
    """Smoothed indicator of a rod (d = 2) or sphere (d = 3) at the cell origin."""
    d = lattice.dimension
    y = cell_points(lattice, (resolution,) * d)

    distance = np.full(y.shape[:-1], np.inf)
    for shift in itertools.product((-1, 0, 1), repeat=d):
        image = y + np.asarray(shift) @ lattice.vectors
        distance = np.minimum(distance, np.linalg.norm(image, axis=-1))

    return 0.5 * (
        scipy.special.erf((radius + distance) / width)
        + scipy.special.erf((radius - distance) / width)
    )


def make_rod_lattice(
    lattice: Lattice,
    radius: float,
    eps_rod,
    eps_bg=1.0,
    smoothing_width: float = 0.01,
    resolution: int = 64,
) -> MaterialWeights:
    shortest = float(np.min(np.linalg.norm(lattice.vectors, axis=1)))
    if not 0 < radius < shortest / 2:
        raise WeightError(f"radius {radius} out of range (0, {shortest / 2})")
    if smoothing_width <= 0:
        raise WeightError("smoothing width must be positive")

    h = rod_profile(lattice, radius, smoothing_width, resolution)[..., None, None]
    eps = (1 - h) * _as_block(eps_bg, "eps_bg") + h * _as_block(eps_rod, "eps_rod")

    samples = np.zeros(eps.shape[:-2] + (6, 6), dtype=complex)
    samples[..., :3, :3] = eps
    samples[..., 3:, 3:] = np.eye(3)
    return MaterialWeights.from_samples(lattice, samples)


@dataclass(frozen=True)
class WeightReport:
    min_eigenvalue: float
    block_minima: dict[str, float]
    hermiticity_defect: float
    is_real: bool
    failures: list[str]

    @property
    def passed(self) -> bool:
        return not self.failures


def _inspect(samples: np.ndarray, floor: float) -> WeightReport:
    flat = samples.reshape(-1, 6, 6)
    defect = float(np.max(np.abs(flat - np.conj(np.swapaxes(flat, -1, -2)))))
    sym = 0.5 * (flat + np.conj(np.swapaxes(flat, -1, -2)))

    min_eig = float(np.min(np.linalg.eigvalsh(sym)))
    blocks = {
        "epsilon": float(np.min(np.linalg.eigvalsh(sym[:, :3, :3]))),
        "mu": float(np.min(np.linalg.eigvalsh(sym[:, 3:, 3:]))),
    }

    failures = []
    if defect > HERMITIAN_TOL * max(1.0, float(np.max(np.abs(flat)))):
        failures.append(f"not hermitian (defect {defect:.3e})")
    if min_eig < floor:
        failures.append(f"not positive definite (min eigenvalue {min_eig:.6g})")

    is_real = bool(np.max(np.abs(flat.imag)) < REAL_TOL)
    return WeightReport(min_eig, blocks, defect, is_real, failures)


def validate_weights(weights: MaterialWeights, floor: float = 1e-8) -> WeightReport:
    return _inspect(weights.samples, floor)
