from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

from .core import RayState, Trajectory
from .flows import Flow, make_flow
from .integrate import Tolerances, integrate
from .model import DispersionModel


class RayTracer:
    def __init__(self, model: DispersionModel, flow: str | Flow = "scalar"):
        self.model = model
        self.flow = make_flow(flow)
        self.rays: list[RayState] = []

    def add(self, r, k) -> RayState:
        state = RayState.from_unwrapped(r, k, self.model.bands.lattice)
        self.rays.append(state)
        return state

    def trace(
        self,
        t_final: float,
        tolerances: Tolerances | None = None,
        *,
        samples: int | None = None,
        threads: int | None = None,
    ) -> list[Trajectory]:
        """Integrate every ray independently; results follow insertion order."""

        def run(state: RayState) -> Trajectory:
            return integrate(self.model, self.flow, state, t_final, tolerances, samples=samples)

        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(run, self.rays))
