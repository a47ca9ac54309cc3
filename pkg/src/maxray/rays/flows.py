from __future__ import annotations

from abc import ABC, abstractmethod
from typing import Callable

import numpy as np

from .core import RayState
from .model import DispersionModel

FLOWS: dict[str, type[Flow]] = dict()


def flow[F: Flow](name: str) -> Callable[[type[F]], type[F]]:
    def wrapper(cls: type[F]) -> type[F]:
        FLOWS[name] = cls
        cls.name = name
        return cls

    return wrapper


def make_flow(name: str | Flow) -> Flow:
    if isinstance(name, Flow):
        return name
    if name not in FLOWS:
        raise ValueError(f"unknown flow '{name}', expected one of {sorted(FLOWS)}")
    return FLOWS[name]()


class Flow(ABC):
    name: str = ""

    @abstractmethod
    def field(self, model: DispersionModel, r: np.ndarray, k: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(ṙ, k̇) at points (..., d)."""
        pass

    def hamiltonian(self, model: DispersionModel, r, k) -> np.ndarray:
        return model.dispersion(r, k).value


@flow("nonscalar")
class NonScalarFlow(Flow):
    """Plain Hamiltonian flow of Ω: ṙ = ∇_kΩ, k̇ = -∇_rΩ."""

    def field(self, model, r, k):
        omega = model.dispersion(r, k)
        return omega.grad_k, -omega.grad_r


@flow("scalar")
class ScalarFlow(NonScalarFlow):
    """Adds the Berry-curvature term -λΞ∇_rΩ to ṙ."""

    def field(self, model, r, k):
        omega = model.dispersion(r, k)
        rdot = omega.grad_k
        if model.lam:
            xi = model.curvature(k)
            rdot = rdot - model.lam * np.einsum("...ij,...j->...i", xi, omega.grad_r)
        return rdot, -omega.grad_r


@flow("leading")
class LeadingFlow(Flow):
    """Hamiltonian flow of Ω₀ = τ²ω alone."""

    def field(self, model, r, k):
        omega = model.dispersion(r, k, lam=0.0)
        return omega.grad_k, -omega.grad_r

    def hamiltonian(self, model, r, k):
        return model.dispersion(r, k, lam=0.0).value


def vector_field_scalar(model: DispersionModel, state: RayState) -> tuple[np.ndarray, np.ndarray]:
    return ScalarFlow().field(model, state.r, state.k)


def vector_field_nonscalar(model: DispersionModel, state: RayState) -> tuple[np.ndarray, np.ndarray]:
    return NonScalarFlow().field(model, state.r, state.k)
