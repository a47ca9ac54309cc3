from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..lattice import Lattice


@dataclass(frozen=True)
class RayState:
    """A phase-space point (r, k) with k folded into the zone.

    ``winding`` counts the reciprocal vectors removed by folding, so the
    continuous momentum is ``k + winding·b``.
    """

    r: np.ndarray
    k: np.ndarray
    winding: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "r", np.asarray(self.r, dtype=float))
        object.__setattr__(self, "k", np.asarray(self.k, dtype=float))
        if self.winding is None:
            object.__setattr__(self, "winding", np.zeros(len(self.k), dtype=int))
        if self.r.shape != self.k.shape:
            raise ValueError(f"r and k must have the same shape, got {self.r.shape} and {self.k.shape}")
        if not (np.all(np.isfinite(self.r)) and np.all(np.isfinite(self.k))):
            raise ValueError("ray state must be finite")

    @classmethod
    def from_unwrapped(cls, r, k, lattice: Lattice) -> RayState:
        folded, winding = lattice.wrap(k)
        return cls(r, folded, winding)

    def unwrapped(self, lattice: Lattice) -> np.ndarray:
        return self.k + self.winding @ lattice.reciprocal

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.r, self.k])


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Samples of one ray; k is kept unwrapped."""

    t: np.ndarray
    r: np.ndarray
    k: np.ndarray
    omega: np.ndarray
    stats: dict = field(default_factory=dict)
    dense: object = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.t)

    @property
    def drift(self) -> float:
        """Largest relative deviation of the Hamiltonian from its initial value."""
        scale = max(abs(float(self.omega[0])), np.finfo(float).tiny)
        return float(np.max(np.abs(self.omega - self.omega[0])) / scale)

    def state(self, i: int, lattice: Lattice) -> RayState:
        return RayState.from_unwrapped(self.r[i], self.k[i], lattice)

    def final(self, lattice: Lattice) -> RayState:
        return self.state(-1, lattice)

    def at(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """(r, k) at an intermediate time from the dense output."""
        if self.dense is None:
            raise ValueError("trajectory was integrated without dense output")
        y = self.dense(t)
        d = self.r.shape[1]
        return y[:d], y[d:]
