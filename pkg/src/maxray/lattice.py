"""Lattices, plane-wave index sets, Brillouin-zone sampling and cell FFTs.

Lengths are in units of the lattice constant and frequencies in units of
2πc/a with c = 1. k-points are Cartesian; reduced coordinates are derived
on demand. Two-dimensional crystals keep the six-component field and are
embedded in 3-space with k_3 = 0.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Literal, Sequence

import numpy as np
import scipy.fft

from .errors import DegenerateLatticeError

type Sector = Literal["full", "te", "tm"]

# Field component order is (E_x, E_y, E_z, H_x, H_y, H_z).
SECTORS: dict[str, tuple[int, ...]] = {
    "full": (0, 1, 2, 3, 4, 5),
    "te": (0, 1, 5),
    "tm": (2, 3, 4),
}

# Positive frequencies per plane wave with k + G != 0.
POSITIVE_PER_MODE = {"full": 2, "te": 1, "tm": 1}


@dataclass(frozen=True, eq=False)
class Lattice:
    vectors: np.ndarray
    reciprocal: np.ndarray

    @property
    def dimension(self) -> int:
        return self.vectors.shape[0]

    @property
    def volume(self) -> float:
        return abs(float(np.linalg.det(self.vectors)))

    @property
    def zone_volume(self) -> float:
        return (2 * math.pi) ** self.dimension / self.volume

    def reduced(self, k) -> np.ndarray:
        """Coordinates of k in the reciprocal basis."""
        return np.asarray(k, dtype=float) @ self.vectors.T / (2 * math.pi)

    def cartesian(self, s) -> np.ndarray:
        return np.asarray(s, dtype=float) @ self.reciprocal

    def position(self, s) -> np.ndarray:
        """Cartesian position of reduced real-space coordinates."""
        return np.asarray(s, dtype=float) @ self.vectors

    def embed(self, v) -> np.ndarray:
        v = np.asarray(v)
        if v.shape[-1] == 3:
            return v
        pad = [(0, 0)] * (v.ndim - 1) + [(0, 3 - v.shape[-1])]
        return np.pad(v, pad)

    def wrap(self, k) -> tuple[np.ndarray, np.ndarray]:
        """Fold k into the reduced cell [-1/2, 1/2)^d, returning the winding."""
        s = self.reduced(k)
        winding = np.floor(s + 0.5)
        return self.cartesian(s - winding), winding.astype(int)

    def matches(self, other: Lattice) -> bool:
        return self is other or (
            self.vectors.shape == other.vectors.shape
            and np.allclose(self.vectors, other.vectors, atol=1e-12)
        )


def build_lattice(d: int, vectors: Sequence[Sequence[float]]) -> Lattice:
    a = np.asarray(vectors, dtype=float)

    if d not in (2, 3) or a.shape != (d, d):
        raise DegenerateLatticeError(f"expected {d} vectors of length {d}, got {a.shape}")

    scale = float(np.prod(np.linalg.norm(a, axis=1)))
    if scale == 0 or abs(np.linalg.det(a)) < 1e-12 * scale:
        raise DegenerateLatticeError("degenerate lattice")

    b = 2 * math.pi * np.linalg.inv(a).T
    return Lattice(vectors=a, reciprocal=b)


def square_lattice() -> Lattice:
    return build_lattice(2, [[1.0, 0.0], [0.0, 1.0]])


def cubic_lattice() -> Lattice:
    return build_lattice(3, np.eye(3))


def hexagonal_lattice() -> Lattice:
    return build_lattice(2, [[1.0, 0.0], [0.5, math.sqrt(3) / 2]])


@dataclass(frozen=True, eq=False)
class PlaneWaveBasis:
    """An ordered set of reciprocal vectors G = m·b with a field sector."""

    lattice: Lattice
    miller: np.ndarray
    gmax: float
    sector: Sector = "full"

    def __post_init__(self):
        if self.sector != "full" and self.lattice.dimension != 2:
            raise ValueError(f"sector '{self.sector}' requires a two-dimensional lattice")

    @property
    def size(self) -> int:
        return len(self.miller)

    @property
    def components(self) -> tuple[int, ...]:
        return SECTORS[self.sector]

    @property
    def ncomp(self) -> int:
        return len(self.components)

    @property
    def dim(self) -> int:
        return self.size * self.ncomp

    @cached_property
    def G(self) -> np.ndarray:
        return self.miller @ self.lattice.reciprocal

    @cached_property
    def lookup(self) -> dict[tuple[int, ...], int]:
        return {tuple(int(x) for x in m): i for i, m in enumerate(self.miller)}

    def shift(self, miller) -> PlaneWaveBasis:
        """The same index set translated by a reciprocal lattice vector."""
        m = np.asarray(miller, dtype=int)
        return PlaneWaveBasis(self.lattice, self.miller + m, self.gmax, self.sector)

    def shift_map(self, miller) -> tuple[np.ndarray, np.ndarray]:
        """Index pairs (dst, src) with G_src = G_dst + m.

        The coefficients of u_{k+m·b} on this basis are the coefficients of u_k
        at the shifted modes; modes that leave the set are dropped.
        """
        m = np.asarray(miller, dtype=int)
        dst, src = [], []
        for i, g in enumerate(self.miller):
            j = self.lookup.get(tuple(int(x) for x in g + m))
            if j is not None:
                dst.append(i)
                src.append(j)
        return np.asarray(dst, dtype=int), np.asarray(src, dtype=int)

    def shift_vectors(self, vectors: np.ndarray, miller) -> np.ndarray:
        """Re-express fiber vectors (dim, ...) at k as vectors at k + m·b."""
        dst, src = self.shift_map(miller)
        nc = self.ncomp
        v = vectors.reshape(self.size, nc, *vectors.shape[1:])
        out = np.zeros_like(v)
        out[dst] = v[src]
        return out.reshape(vectors.shape)

    def is_negation_closed(self) -> bool:
        return all(tuple(int(x) for x in -m) in self.lookup for m in self.miller)

    def positive_count(self, k) -> int:
        """Exact number of positive fiber eigenvalues at k (Sylvester inertia)."""
        q = np.asarray(k, dtype=float) + self.G
        scale = max(1.0, float(np.max(np.abs(self.G))) if self.size else 1.0)
        nonzero = int(np.sum(np.linalg.norm(q, axis=1) > 1e-10 * scale))
        return POSITIVE_PER_MODE[self.sector] * nonzero


def _sorted_basis(lattice: Lattice, miller: np.ndarray, gmax: float, sector: Sector):
    g = np.linalg.norm(miller @ lattice.reciprocal, axis=1)
    order = sorted(range(len(miller)), key=lambda i: (round(float(g[i]), 9), tuple(miller[i])))
    return PlaneWaveBasis(lattice, miller[order], gmax, sector)


def planewave_set(lattice: Lattice, gmax: float, sector: Sector = "full") -> PlaneWaveBasis:
    if gmax < 0:
        raise ValueError("gmax must be non-negative")

    bounds = [
        math.ceil(gmax * float(np.linalg.norm(a)) / (2 * math.pi)) for a in lattice.vectors
    ]
    candidates = np.array(
        list(itertools.product(*(range(-n, n + 1) for n in bounds))), dtype=int
    )
    norms = np.linalg.norm(candidates @ lattice.reciprocal, axis=1)
    return _sorted_basis(lattice, candidates[norms <= gmax + 1e-9], gmax, sector)


def grid_basis(lattice: Lattice, samples: int | Sequence[int], sector: Sector = "full") -> PlaneWaveBasis:
    """All Miller indices representable on an odd per-axis sample grid."""
    d = lattice.dimension
    s = (samples,) * d if isinstance(samples, int) else tuple(samples)

    if any(n % 2 == 0 or n < 1 for n in s):
        raise ValueError(f"grid basis needs odd positive sample counts, got {s}")

    half = [(n - 1) // 2 for n in s]
    miller = np.array(list(itertools.product(*(range(-h, h + 1) for h in half))), dtype=int)
    gmax = float(np.max(np.linalg.norm(miller @ lattice.reciprocal, axis=1)))
    return _sorted_basis(lattice, miller, gmax, sector)


@dataclass(frozen=True, eq=False)
class KGrid:
    lattice: Lattice
    shape: tuple[int, ...]
    shift: tuple[float, ...]
    points: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.points)

    @cached_property
    def reduced(self) -> np.ndarray:
        idx = np.indices(self.shape).reshape(len(self.shape), -1).T
        return (idx + np.asarray(self.shift)) / np.asarray(self.shape)

    def index(self, n: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(n), self.shape, mode="wrap"))

    def multi_index(self, i: int) -> tuple[int, ...]:
        return tuple(int(x) for x in np.unravel_index(i, self.shape))

    def neighbor(self, i: int, axis: int, step: int = 1) -> int:
        n = list(self.multi_index(i))
        n[axis] += step
        return self.index(n)

    @cached_property
    def neighbors(self) -> np.ndarray:
        """Forward neighbor of every point along each axis, shape (d, size)."""
        idx = np.arange(self.size).reshape(self.shape)
        return np.stack([np.roll(idx, -1, axis=a).ravel() for a in range(len(self.shape))])

    @cached_property
    def wraps(self) -> np.ndarray:
        """Whether the forward neighbor crosses the zone boundary, shape (d, size)."""
        idx = np.indices(self.shape).reshape(len(self.shape), -1)
        return np.stack([idx[a] == self.shape[a] - 1 for a in range(len(self.shape))])

    @property
    def plaquette_area(self) -> float:
        steps = self.lattice.reciprocal / np.asarray(self.shape)[:, None]
        return abs(float(np.linalg.det(steps)))


def monkhorst_grid(
    lattice: Lattice, counts: Sequence[int], shift: Sequence[float] | None = None
) -> KGrid:
    shape = tuple(int(n) for n in counts)
    if len(shape) != lattice.dimension or any(n < 1 for n in shape):
        raise ValueError(f"need {lattice.dimension} positive subdivisions, got {shape}")

    shift = tuple(float(x) for x in (shift or (0.0,) * len(shape)))
    idx = np.indices(shape).reshape(len(shape), -1).T
    points = lattice.cartesian((idx + np.asarray(shift)) / np.asarray(shape))
    return KGrid(lattice, shape, shift, points)


@dataclass(frozen=True, eq=False)
class KPath:
    lattice: Lattice
    points: np.ndarray
    distance: np.ndarray
    labels: list[tuple[int, str]]

    @property
    def size(self) -> int:
        return len(self.points)


def kpath(
    lattice: Lattice,
    waypoints: Sequence[tuple[str, Sequence[float]]],
    points_per_segment: int = 20,
) -> KPath:
    """A piecewise-linear path through labelled reduced-coordinate waypoints."""
    if len(waypoints) < 2:
        raise ValueError("a path needs at least two waypoints")

    corners = [lattice.cartesian(s) for _, s in waypoints]
    points = [corners[0]]
    labels = [(0, waypoints[0][0])]

    for (label, _), start, end in zip(waypoints[1:], corners, corners[1:]):
        for t in np.linspace(0, 1, points_per_segment + 1)[1:]:
            points.append(start + t * (end - start))
        labels.append((len(points) - 1, label))

    points = np.array(points)
    steps = np.linalg.norm(np.diff(points, axis=0), axis=1)
    distance = np.concatenate([[0.0], np.cumsum(steps)])
    return KPath(lattice, points, distance, labels)


def cell_points(lattice: Lattice, shape: Sequence[int]) -> np.ndarray:
    """Cartesian sample positions y = Σ (j_i/n_i) a_i, shape (*shape, d)."""
    grids = np.meshgrid(*(np.arange(n) / n for n in shape), indexing="ij")
    return lattice.position(np.stack(grids, axis=-1))


def cell_fft(samples: np.ndarray, ndim: int) -> np.ndarray:
    """Fourier coefficients over the first ``ndim`` axes.

    The coefficient of e^{i m·b·y} sits at index m mod n.
    """
    samples = np.asarray(samples)
    if not np.all(np.isfinite(samples)):
        raise ValueError("non-finite samples")
    return scipy.fft.fftn(samples, axes=tuple(range(ndim)), norm="forward")


def cell_ifft(coefficients: np.ndarray, ndim: int) -> np.ndarray:
    return scipy.fft.ifftn(coefficients, axes=tuple(range(ndim)), norm="forward")
