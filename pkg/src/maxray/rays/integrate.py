from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.integrate

from ..errors import IntegrationError
from .core import RayState, Trajectory
from .flows import Flow, make_flow
from .model import DispersionModel

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Tolerances:
    rtol: float = 1e-12
    atol: float = 1e-14
    max_step: float = np.inf
    drift: float = 1e-8

    def __post_init__(self):
        if self.rtol <= 0 or self.atol <= 0 or self.max_step <= 0:
            raise ValueError("integrator tolerances must be positive")


def _solve(fun, t_final: float, y0: np.ndarray, tol: Tolerances, t_eval=None):
    return scipy.integrate.solve_ivp(
        fun,
        (0.0, t_final),
        y0,
        method="RK45",
        rtol=tol.rtol,
        atol=tol.atol,
        max_step=tol.max_step,
        t_eval=t_eval,
        dense_output=True,
    )


def integrate(
    model: DispersionModel,
    flavor: str | Flow,
    state0: RayState,
    t_final: float,
    tolerances: Tolerances | None = None,
    *,
    samples: int | None = None,
) -> Trajectory:
    """Integrate one ray with an adaptive 5(4) Runge-Kutta scheme.

    Negative ``t_final`` integrates backwards. k is integrated unwrapped and
    folded only inside the interpolants.
    """
    if not np.isfinite(t_final):
        raise ValueError("t_final must be finite")

    tol = tolerances or Tolerances()
    flow = make_flow(flavor)
    lattice = model.bands.lattice
    d = model.dimension
    y0 = np.concatenate([state0.r, state0.unwrapped(lattice)])

    def fun(_, y):
        rdot, kdot = flow.field(model, y[:d], y[d:])
        return np.concatenate([rdot, kdot])

    if t_final == 0:
        t = np.zeros(1)
        ys = y0[:, None]
        stats, dense = {"nfev": 0, "status": 0}, None
    else:
        t_eval = None if samples is None else np.linspace(0.0, t_final, samples)
        sol = _solve(fun, t_final, y0, tol, t_eval)
        if sol.status < 0:
            last = RayState.from_unwrapped(sol.y[:d, -1], sol.y[d:, -1], lattice)
            raise IntegrationError(f"integration failed at t={sol.t[-1]:.6g}: {sol.message}", state=last)
        t, ys = sol.t, sol.y
        stats, dense = {"nfev": int(sol.nfev), "status": int(sol.status)}, sol.sol

    r, k = ys[:d].T, ys[d:].T
    omega = np.asarray(flow.hamiltonian(model, r, k))
    trajectory = Trajectory(t, r, k, omega, stats, dense)

    stats["drift"] = trajectory.drift
    stats["drift_ok"] = bool(trajectory.drift <= tol.drift)
    if not stats["drift_ok"]:
        logger.warning("%s flow: Hamiltonian drift %.3e exceeds %.1e", flow.name, trajectory.drift, tol.drift)
    logger.debug("%s flow to t=%g: %d evaluations, drift %.2e", flow.name, t_final, stats["nfev"], trajectory.drift)
    return trajectory


@dataclass(frozen=True)
class Ensemble:
    r: np.ndarray
    k: np.ndarray
    volume_defect: float
    nfev: int


def push_ensemble(
    model: DispersionModel,
    flavor: str | Flow,
    points,
    t: float,
    tolerances: Tolerances | None = None,
    *,
    volume_points: int = 8,
    h: float = 1e-4,
) -> Ensemble:
    """Transport points (N, 2d) = [r | k] with one shared step-size controller.

    The volume diagnostic is max |det J - 1| over the first ``volume_points`` points,
    with J from centered differences of a ±h cloud pushed alongside.
    """
    tol = tolerances or Tolerances()
    flow = make_flow(flavor)
    d = model.dimension
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[1] != 2 * d:
        raise ValueError(f"points must have {2 * d} columns [r | k]")

    n = len(points)
    m = min(volume_points, n)
    offsets = np.concatenate([np.eye(2 * d), -np.eye(2 * d)]) * h
    cloud = (points[:m, None, :] + offsets[None]).reshape(-1, 2 * d)
    everything = np.vstack([points, cloud])

    if t == 0:
        return Ensemble(points[:, :d].copy(), points[:, d:].copy(), 0.0, 0)

    def fun(_, y):
        z = y.reshape(-1, 2 * d)
        rdot, kdot = flow.field(model, z[:, :d], z[:, d:])
        return np.concatenate([rdot, kdot], axis=1).ravel()

    sol = _solve(fun, t, everything.ravel(), tol)
    final = sol.y[:, -1].reshape(-1, 2 * d)
    if sol.status < 0:
        bad = np.flatnonzero(~np.all(np.isfinite(final), axis=1))
        index = int(bad[0]) if bad.size else None
        raise IntegrationError(
            f"ensemble integration failed at t={sol.t[-1]:.6g}: {sol.message}",
            state=final[index] if index is not None else None,
            index=index if index is None or index < n else (index - n) // (4 * d),
        )

    moved = final[n:].reshape(m, 2, 2 * d, 2 * d)
    jac = (moved[:, 0] - moved[:, 1]).transpose(0, 2, 1) / (2 * h)
    defect = float(np.max(np.abs(np.linalg.det(jac) - 1)))

    logger.debug("pushed %d points to t=%g, volume defect %.2e", n, t, defect)
    return Ensemble(final[:n, :d], final[:n, d:], defect, int(sol.nfev))
