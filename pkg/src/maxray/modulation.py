"""Slow modulation profiles τ_ε(r), τ_μ(r) on the macroscopic scale.

All profiles are vectorized over leading axes: ``value`` maps (..., d) to
(...), ``gradient`` to (..., d) and ``hessian`` to (..., d, d).
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import WeightError

type Mode = Literal["split", "scalar"]


class Profile(ABC):
    @abstractmethod
    def value(self, r) -> np.ndarray:
        pass

    @abstractmethod
    def gradient(self, r) -> np.ndarray:
        pass

    @abstractmethod
    def hessian(self, r) -> np.ndarray:
        pass

    def bounds(self) -> tuple[float, float]:
        """Lower and upper bound over all of space."""
        return (0.0, np.inf)


class Constant(Profile):
    def __init__(self, c: float = 1.0):
        self.c = float(c)

    def value(self, r):
        r = np.asarray(r, dtype=float)
        return np.full(r.shape[:-1], self.c)

    def gradient(self, r):
        return np.zeros_like(np.asarray(r, dtype=float))

    def hessian(self, r):
        r = np.asarray(r, dtype=float)
        return np.zeros(r.shape + (r.shape[-1],))

    def bounds(self):
        return (self.c, self.c)


class Gaussian(Profile):
    """Plain Gaussian window exp(-|r - c|²/w²), used as a region function."""

    def __init__(self, width: float, center):
        if width <= 0:
            raise WeightError("gaussian width must be positive")
        self.width = float(width)
        self.center = np.asarray(center, dtype=float)

    def value(self, r):
        u = np.asarray(r, dtype=float) - self.center
        return np.exp(-np.sum(u * u, axis=-1) / self.width**2)

    def gradient(self, r):
        u = np.asarray(r, dtype=float) - self.center
        return self.value(r)[..., None] * (-2 * u / self.width**2)

    def hessian(self, r):
        u = np.asarray(r, dtype=float) - self.center
        w2 = self.width**2
        outer = 4 * u[..., :, None] * u[..., None, :] / w2**2
        return self.value(r)[..., None, None] * (outer - 2 * np.eye(u.shape[-1]) / w2)

    def bounds(self):
        return (0.0, 1.0)


class GaussianBump(Profile):
    """(1 + s·exp(-|r - c|²/w²)) normalized to 1 at the origin."""

    def __init__(self, strength: float, width: float, center):
        if strength <= -1:
            raise WeightError("bump strength must exceed -1 to keep the profile positive")
        self.strength = float(strength)
        self.window = Gaussian(width, center)
        origin = np.zeros_like(self.window.center)
        self.norm = 1 + self.strength * float(self.window.value(origin))

    def value(self, r):
        return (1 + self.strength * self.window.value(r)) / self.norm

    def gradient(self, r):
        return self.strength * self.window.gradient(r) / self.norm

    def hessian(self, r):
        return self.strength * self.window.hessian(r) / self.norm

    def bounds(self):
        lo, hi = sorted((1.0, 1.0 + self.strength))
        return (lo / self.norm, hi / self.norm)


class SmoothRamp(Profile):
    """A tanh step of height ``amplitude`` across the plane n·r = offset."""

    def __init__(self, amplitude: float, width: float, direction, offset: float = 0.0):
        if amplitude <= -1:
            raise WeightError("ramp amplitude must exceed -1 to keep the profile positive")
        if width <= 0:
            raise WeightError("ramp width must be positive")
        n = np.asarray(direction, dtype=float)
        self.direction = n / np.linalg.norm(n)
        self.amplitude = float(amplitude)
        self.width = float(width)
        self.offset = float(offset)
        self.norm = 1 + 0.5 * self.amplitude * (1 + np.tanh(-self.offset / self.width))

    def _u(self, r):
        return (np.asarray(r, dtype=float) @ self.direction - self.offset) / self.width

    def value(self, r):
        return (1 + 0.5 * self.amplitude * (1 + np.tanh(self._u(r)))) / self.norm

    def gradient(self, r):
        sech2 = 1 / np.cosh(self._u(r)) ** 2
        return (0.5 * self.amplitude * sech2 / self.width)[..., None] * self.direction / self.norm

    def hessian(self, r):
        u = self._u(r)
        sech2 = 1 / np.cosh(u) ** 2
        scale = -self.amplitude * np.tanh(u) * sech2 / self.width**2 / self.norm
        return scale[..., None, None] * np.outer(self.direction, self.direction)

    def bounds(self):
        lo, hi = sorted((1.0, 1.0 + self.amplitude))
        return (lo / self.norm, hi / self.norm)


class Product(Profile):
    """Pointwise product of profiles; the harness uses it to fold τ factors into a region."""

    def __init__(self, *factors: Profile):
        if not factors:
            raise WeightError("a product needs at least one factor")
        self.factors = factors

    def value(self, r):
        out = self.factors[0].value(r)
        for f in self.factors[1:]:
            out = out * f.value(r)
        return out

    def gradient(self, r):
        values = [f.value(r) for f in self.factors]
        total = 0.0
        for i, f in enumerate(self.factors):
            rest = np.prod([v for j, v in enumerate(values) if j != i], axis=0)
            total = total + np.asarray(rest)[..., None] * f.gradient(r)
        return total

    def hessian(self, r):
        values = [f.value(r) for f in self.factors]
        grads = [f.gradient(r) for f in self.factors]
        n = len(self.factors)
        total = 0.0
        for i in range(n):
            rest = np.prod([values[j] for j in range(n) if j != i], axis=0)
            total = total + np.asarray(rest)[..., None, None] * self.factors[i].hessian(r)
            for j in range(n):
                if j == i:
                    continue
                others = np.prod([values[m] for m in range(n) if m not in (i, j)], axis=0)
                total = total + np.asarray(others)[..., None, None] * grads[i][..., :, None] * grads[j][..., None, :]
        return total

    def bounds(self):
        lo, hi = 1.0, 1.0
        for f in self.factors:
            a, b = f.bounds()
            corners = [lo * a, lo * b, hi * a, hi * b]
            lo, hi = min(corners), max(corners)
        return (lo, hi)


PROFILES: dict[str, type[Profile]] = {
    "constant": Constant,
    "gaussian": Gaussian,
    "gaussian_bump": GaussianBump,
    "smooth_ramp": SmoothRamp,
}


def make_profile(kind: str, **params) -> Profile:
    if kind not in PROFILES:
        raise WeightError(f"unknown profile kind '{kind}'")
    try:
        return PROFILES[kind](**params)
    except TypeError as e:
        raise WeightError(f"bad parameters for '{kind}': {e}") from e


@dataclass(frozen=True, eq=False)
class ModulationProfile:
    epsilon: Profile
    mu: Profile
    mode: Mode = "split"

    def __post_init__(self):
        if self.mode not in ("split", "scalar"):
            raise WeightError(f"unknown coupling mode '{self.mode}'")
        if self.mode == "scalar" and self.mu is not self.epsilon:
            raise WeightError("scalar mode needs tau_eps and tau_mu to be the same profile")
        for p in (self.epsilon, self.mu):
            lo, _ = p.bounds()
            if lo <= 0:
                raise WeightError("modulation profiles must stay bounded away from zero")

    @property
    def is_constant(self) -> bool:
        return isinstance(self.epsilon, Constant) and isinstance(self.mu, Constant)

    def tau_eps(self, r):
        return self.epsilon.value(r)

    def tau_mu(self, r):
        return self.mu.value(r)

    def tau(self, r):
        return np.sqrt(self.tau_eps(r) * self.tau_mu(r))

    def tau_squared(self, r):
        return self.tau_eps(r) * self.tau_mu(r)

    def tau_squared_gradient(self, r):
        te, tm = self.tau_eps(r)[..., None], self.tau_mu(r)[..., None]
        return tm * self.epsilon.gradient(r) + te * self.mu.gradient(r)

    def log_tau_gradient(self, r):
        """∇ ln τ."""
        te, tm = self.tau_eps(r)[..., None], self.tau_mu(r)[..., None]
        return 0.5 * (self.epsilon.gradient(r) / te + self.mu.gradient(r) / tm)

    def coupling(self, r):
        """∇ ln(τ_ε/τ_μ); identically zero when both profiles coincide."""
        if self.mu is self.epsilon:
            return np.zeros_like(np.asarray(r, dtype=float))
        te, tm = self.tau_eps(r)[..., None], self.tau_mu(r)[..., None]
        return self.epsilon.gradient(r) / te - self.mu.gradient(r) / tm

    def coupling_hessian(self, r):
        r = np.asarray(r, dtype=float)
        if self.mu is self.epsilon:
            return np.zeros(r.shape + (r.shape[-1],))
        return _log_hessian(self.epsilon, r) - _log_hessian(self.mu, r)


def _log_hessian(p: Profile, r) -> np.ndarray:
    v = p.value(r)[..., None, None]
    g = p.gradient(r)
    return p.hessian(r) / v - g[..., :, None] * g[..., None, :] / v**2


def modulation_profile(
    kind: str, *, mode: Mode = "split", mu: Profile | None = None, **params
) -> ModulationProfile:
    """Build τ_ε from ``kind``/``params``; τ_μ is ``mu`` (split) or τ_ε itself (scalar)."""
    if kind not in ("constant", "gaussian_bump", "smooth_ramp"):
        raise WeightError(f"unknown modulation kind '{kind}'")
    if kind == "constant" and params.get("c", 1.0) != 1.0:
        raise WeightError("a constant modulation must equal 1")

    eps = make_profile(kind, **params)
    if mode == "scalar":
        return ModulationProfile(eps, eps, "scalar")
    return ModulationProfile(eps, mu or Constant(), mode)
