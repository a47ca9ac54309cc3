"""Periodic interpolation of band data and the dispersion relation Ω over phase space."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np
import scipy.interpolate

from ..geometry import BandGeometry, Dispersion, dispersion
from ..lattice import KGrid, Lattice
from ..modulation import ModulationProfile

logger = logging.getLogger(__name__)

_AXES = "ijk"


def _cardinal(n: int):
    """Periodic cubic cardinal functions on nodes 0..n-1, evaluated as f(t, nu) -> (P, n)."""
    if n == 1:
        return lambda t, nu=0: np.full((len(t), 1), 1.0 if nu == 0 else 0.0)
    y = np.vstack([np.eye(n), np.eye(n)[:1]])
    spline = scipy.interpolate.CubicSpline(np.arange(n + 1), y, bc_type="periodic")
    return lambda t, nu=0: spline(t, nu)


class PeriodicSpline:
    """Tensor-product periodic cubic spline over a shifted grid of the unit torus.

    Coordinates are reduced (period 1 per axis). Node j sits at (j + shift)/n.
    """

    def __init__(self, values, shape: Sequence[int], shift: Sequence[float] | None = None):
        self.shape = tuple(int(n) for n in shape)
        values = np.asarray(values)
        d = len(self.shape)
        # either grid-shaped or flattened in row-major grid order
        self.channels = values.shape[d:] if values.shape[:d] == self.shape else values.shape[1:]
        self.values = values.reshape(self.shape + self.channels)
        self.shift = np.zeros(len(self.shape)) if shift is None else np.asarray(shift, dtype=float)
        self._cardinal = [_cardinal(n) for n in self.shape]

    @property
    def ndim(self) -> int:
        return len(self.shape)

    def _weights(self, s: np.ndarray, axis: int, nu: int = 0) -> np.ndarray:
        n = self.shape[axis]
        t = np.mod(s[:, axis] * n - self.shift[axis], n)
        return self._cardinal[axis](t, nu) * n**nu

    def _contract(self, weights: list[np.ndarray]) -> np.ndarray:
        axes = _AXES[: self.ndim]
        subscripts = ",".join(f"p{a}" for a in axes) + f",{axes}...->p..."
        return np.einsum(subscripts, *weights, self.values)

    def __call__(self, s) -> np.ndarray:
        s = np.atleast_2d(np.asarray(s, dtype=float))
        return self._contract([self._weights(s, a) for a in range(self.ndim)])

    def gradient(self, s) -> np.ndarray:
        """Derivatives along each reduced axis, shape (P, d, *channels)."""
        s = np.atleast_2d(np.asarray(s, dtype=float))
        w = [self._weights(s, a) for a in range(self.ndim)]
        out = []
        for a in range(self.ndim):
            wa = list(w)
            wa[a] = self._weights(s, a, 1)
            out.append(self._contract(wa))
        return np.stack(out, axis=1)

    def periodicity_defect(self) -> float:
        """Mismatch of value and first derivative across the wrap of every axis."""
        defect = 0.0
        for a, f in enumerate(self._cardinal):
            n = self.shape[a]
            if n == 1:
                continue
            for nu in (0, 1):
                ends = f(np.array([0.0, float(n)]), nu)
                defect = max(defect, float(np.max(np.abs(ends[0] - ends[1]))))
        return defect


def _flatten(k) -> tuple[np.ndarray, tuple[int, ...]]:
    k = np.asarray(k, dtype=float)
    return k.reshape(-1, k.shape[-1]), k.shape[:-1]


@dataclass(frozen=True, eq=False)
class BandInterpolant:
    """Splines of ω, ∇ω, Ξ and P for one band over the zone."""

    lattice: Lattice
    omega_spline: PeriodicSpline
    velocity_spline: PeriodicSpline
    curvature_spline: PeriodicSpline
    poynting_spline: PeriodicSpline

    @classmethod
    def from_grids(cls, grid: KGrid, omega, velocity, curvature, poynting) -> BandInterpolant:
        def spline(values):
            return PeriodicSpline(np.asarray(values, dtype=float), grid.shape, grid.shift)

        return cls(grid.lattice, spline(omega), spline(velocity), spline(curvature), spline(poynting))

    @classmethod
    def from_geometry(cls, geometry: BandGeometry) -> BandInterpolant:
        return cls.from_grids(
            geometry.grid,
            geometry.omega_grid,
            geometry.velocity_grid,
            geometry.curvature_grid,
            geometry.poynting_grid,
        )

    def _reduced(self, k) -> tuple[np.ndarray, tuple[int, ...]]:
        flat, lead = _flatten(k)
        return self.lattice.reduced(flat), lead

    def _to_cartesian(self, grad_s: np.ndarray) -> np.ndarray:
        # ∂/∂k_j = Σ_i ∂/∂s_i · a_ij / 2π
        return np.einsum("pi...,ij->pj...", grad_s, self.lattice.vectors) / (2 * math.pi)

    def omega(self, k) -> np.ndarray:
        s, lead = self._reduced(k)
        return self.omega_spline(s).reshape(lead)

    def omega_gradient(self, k) -> np.ndarray:
        s, lead = self._reduced(k)
        return self._to_cartesian(self.omega_spline.gradient(s)).reshape(lead + (-1,))

    def velocity(self, k) -> np.ndarray:
        s, lead = self._reduced(k)
        return self.velocity_spline(s).reshape(lead + (-1,))

    def poynting(self, k) -> np.ndarray:
        s, lead = self._reduced(k)
        return self.poynting_spline(s).reshape(lead + (3,))

    def poynting_jacobian(self, k) -> np.ndarray:
        """∂P_a/∂k_j, shape (..., 3, d)."""
        s, lead = self._reduced(k)
        grad = self._to_cartesian(self.poynting_spline.gradient(s))
        return np.swapaxes(grad, 1, 2).reshape(lead + (3, self.lattice.dimension))

    def curvature(self, k) -> np.ndarray:
        """Antisymmetric Ξ_ij, shape (..., d, d)."""
        s, lead = self._reduced(k)
        c = self.curvature_spline(s)
        d = self.lattice.dimension
        xi = np.zeros((len(s), d, d))
        if d == 2:
            c = c.reshape(-1)
            xi[:, 0, 1], xi[:, 1, 0] = c, -c
        else:
            for (i, j), comp in (((1, 2), 0), ((2, 0), 1), ((0, 1), 2)):
                xi[:, i, j], xi[:, j, i] = c[:, comp], -c[:, comp]
        return xi.reshape(lead + (d, d))


type VelocitySource = Literal["interpolated", "derived"]


@dataclass(frozen=True, eq=False)
class DispersionModel:
    """Ω(r, k) = τ(r)²ω(k) - λτ(r)²P(k)·∇ln(τ_ε/τ_μ)(r) on interpolated band data.

    The default ``velocity_source="derived"`` differentiates the ω spline, so Ω
    is an exact invariant of the interpolated vector field. ``"interpolated"``
    takes ∇_kω from the spline of the Hellmann-Feynman velocity instead; the
    two differ by the interpolation error and Ω then drifts at that level.
    Keep it for diagnostics next to :meth:`velocity_consistency`.
    """

    bands: BandInterpolant
    modulation: ModulationProfile
    lam: float
    velocity_source: VelocitySource = "derived"

    def __post_init__(self):
        if self.velocity_source not in ("interpolated", "derived"):
            raise ValueError(f"unknown velocity source '{self.velocity_source}'")
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")

    @property
    def dimension(self) -> int:
        return self.bands.lattice.dimension

    def omega(self, k):
        return self.bands.omega(k)

    def velocity(self, k):
        if self.velocity_source == "derived":
            return self.bands.omega_gradient(k)
        return self.bands.velocity(k)

    def poynting(self, k):
        return self.bands.poynting(k)

    def poynting_jacobian(self, k):
        return self.bands.poynting_jacobian(k)

    def curvature(self, k):
        return self.bands.curvature(k)

    def dispersion(self, r, k, lam: float | None = None) -> Dispersion:
        return dispersion(self, self.modulation, r, k, self.lam if lam is None else lam)

    def velocity_consistency(self) -> float:
        """Largest |∇ω spline - velocity spline| over nodes and cell midpoints."""
        spline = self.bands.omega_spline
        axes = [
            (np.arange(2 * n) / 2 + sh) / n for n, sh in zip(spline.shape, spline.shift)
        ]
        s = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))
        k = self.bands.lattice.cartesian(s)
        mismatch = float(np.max(np.abs(self.bands.omega_gradient(k) - self.bands.velocity(k))))
        if mismatch > 1e-5:
            logger.warning("velocity spline and ω-spline gradient differ by %.3e", mismatch)
        return mismatch
