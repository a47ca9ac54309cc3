"""λ-sweeps comparing direct Maxwell propagation with transported phase-space averages.

For each λ the reference side propagates a band wavepacket on a supercell and
measures a quantized observable. The ray side transports the Wigner grid of
the initial state along a ray flow and averages the observable's symbol: the
scalar symbol for scalar observables, the first-order matrix symbol f_ro
through the fiber-resolved contraction otherwise.

Both sides work in the frame Φ = SΨ of the periodic operator. There a region
observable ρ(r)·W·I becomes ρ_eff(r)·W·I with τ factors folded into ρ_eff.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
import scipy.stats

from . import __version__
from .bloch import BlochSolution, band_structure, check_gap, self_convergence
from .config import RunConfig, ToleranceConfig, build_fixture
from .errors import ConfigError, GapError, GateFailure, NoiseFloorError
from .geometry import ProductObservable, assemble_fro, band_geometry, fiber_data, fro_symbol, pi1_matrix
from .io import sha256_json
from .lattice import PlaneWaveBasis, monkhorst_grid
from .materials import MaterialWeights
from .modulation import Constant, ModulationProfile, Product, Profile
from .rays import BandInterpolant, DispersionModel, PeriodicSpline, Tolerances, push_ensemble
from .supercell import (
    ObservableDescriptor,
    SupercellOperator,
    build_supercell,
    expectation,
    propagate,
    quantize_observable,
    weyl_apply,
)
from .wigner import FieldState, WignerGrid, boundary_mass, gaussian_bloch_state, matrix_wigner_contract, reduced_wigner

logger = logging.getLogger(__name__)

# observable kind on the ray side -> kind of the quantized reference observable
HARNESS_KINDS = {
    "energy": "energy",
    "poynting": "poynting",
    "amplitude_e": "amplitudeE",
    "stress": "stress",
}

type Flavor = Literal["scalar", "nonscalar"]
type FlowChoice = Literal["corrected", "leading"]


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    weights: MaterialWeights
    basis: PlaneWaveBasis
    kgrid: tuple[int, ...]
    band: int
    modulation: ModulationProfile
    r0: np.ndarray
    k0: np.ndarray
    width: float
    lams: tuple[float, ...]
    times: tuple[float, ...]
    extent: tuple[float, ...]
    observable: str = "energy"
    indices: tuple[int, ...] = ()
    region: Profile = field(default_factory=Constant)
    flavor: Flavor = "scalar"
    flow: FlowChoice = "corrected"
    order: int = 0
    proceed: bool = False
    samples: int = 9
    krylov_dim: int = 30
    horizon: float = 2.0
    tolerances: ToleranceConfig = field(default_factory=ToleranceConfig)
    seed: int = 0
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        lams = self.lams
        if len(lams) < 3:
            raise ConfigError("a sweep needs at least 3 lambda values")
        if any(a <= b for a, b in zip(lams, lams[1:])) or lams[-1] <= 0:
            raise ConfigError("lambda values must be positive and strictly decreasing")
        if not self.times or any(not math.isfinite(t) or t < 0 for t in self.times):
            raise ConfigError("times must be finite and non-negative")
        if max(self.times) > self.horizon:
            raise ConfigError(f"time {max(self.times)} exceeds the horizon {self.horizon}")
        if self.observable not in HARNESS_KINDS:
            raise ConfigError(f"observable '{self.observable}' is not supported by the harness")
        if self.flavor not in ("scalar", "nonscalar"):
            raise ConfigError(f"unknown observable flavor '{self.flavor}'")
        if self.flow not in ("corrected", "leading"):
            raise ConfigError(f"unknown flow '{self.flow}'")
        if len(self.extent) != self.weights.lattice.dimension:
            raise ConfigError("extent needs one entry per lattice axis")
        if self.observable == "stress" and not (
            self.modulation.mode == "scalar" or self.modulation.is_constant
        ):
            raise ConfigError("stress needs a scalar or constant modulation")

    @classmethod
    def from_config(cls, config: RunConfig, *, seed: int = 0) -> ExperimentConfig:
        config.require("basis", "kgrid", "state", "sweep")
        if config.kgrid.counts is None:
            raise ConfigError("missing key 'kgrid.counts'")
        fixture = build_fixture(config)
        lattice = fixture.lattice
        state, sweep, obs = config.state, config.sweep, config.observable
        return cls(
            weights=fixture.weights,
            basis=fixture.basis,
            kgrid=tuple(config.kgrid.counts),
            band=config.band.index,
            modulation=config.modulation.build(),
            r0=np.asarray(state.r0, dtype=float),
            k0=lattice.cartesian(state.k0),
            width=state.width,
            lams=tuple(sweep.lambdas),
            times=tuple(sweep.times),
            extent=tuple(sweep.extent),
            observable=obs.kind,
            indices=tuple(obs.indices),
            region=obs.region_profile(),
            flavor=obs.flavor,
            flow=sweep.flow,
            order=state.order,
            proceed=state.proceed,
            samples=sweep.samples,
            krylov_dim=sweep.krylov_dim,
            tolerances=config.tolerances,
            seed=seed,
            provenance={
                "config_sha256": sha256_json(config.raw),
                "fixture_sha256": sha256_json(config.fixture),
            },
        )

    def cells(self, lam: float) -> tuple[int, ...]:
        """Odd cell counts covering ``extent`` at scale λ; zero extent gives a strip."""
        out = []
        for e, a in zip(self.extent, self.weights.lattice.vectors):
            if e <= 0:
                out.append(1)
                continue
            n = math.ceil(e / (lam * float(np.linalg.norm(a))))
            out.append(n + 1 - n % 2)
        return tuple(out)

    def supercell(self, lam: float) -> SupercellOperator:
        return build_supercell(
            self.weights,
            self.modulation,
            lam,
            self.cells(lam),
            self.samples,
            sector=self.basis.sector,
            check=False,
        )

    def wavepacket(self, op: SupercellOperator) -> FieldState:
        return gaussian_bloch_state(
            op, self.band, self.r0, self.k0, self.width, self.order, proceed=self.proceed
        )

    def effective_region(self) -> Profile:
        m = self.modulation
        match self.observable:
            case "energy":
                return self.region
            case "poynting":
                return Product(self.region, m.epsilon, m.mu)
            case _:
                return Product(self.region, m.epsilon, m.epsilon)


# --- Slope fits ---


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    stderr: float
    residual: float
    used: int
    excluded: list[float]


def slope_fit(lams: Sequence[float], errors: Sequence[float], noise_floor: float = 0.0) -> SlopeFit:
    """Least-squares slope of log e against log λ.

    Points with e <= ``noise_floor`` are excluded and listed by their λ.
    """
    lams, errors = np.asarray(lams, dtype=float), np.asarray(errors, dtype=float)
    if len(lams) != len(errors):
        raise ValueError("lambda and error lists differ in length")
    if len(lams) < 3:
        raise ValueError("a slope fit needs at least 3 points")
    if np.any(lams <= 0):
        raise ValueError("lambda values must be positive")

    keep = errors > noise_floor
    excluded = [float(x) for x in lams[~keep]]
    if keep.sum() < 2:
        raise NoiseFloorError("below noise floor")
    if excluded:
        logger.info("slope fit: %d points at the noise floor excluded", len(excluded))

    x, y = np.log(lams[keep]), np.log(errors[keep])
    fit = scipy.stats.linregress(x, y)
    residual = float(np.sqrt(np.mean((y - fit.intercept - fit.slope * x) ** 2)))
    stderr = float(fit.stderr) if keep.sum() > 2 else math.nan
    return SlopeFit(float(fit.slope), float(fit.intercept), stderr, residual, int(keep.sum()), excluded)


# --- Shared band data ---


@dataclass(frozen=True, eq=False)
class _Context:
    config: ExperimentConfig
    solution: BlochSolution
    interpolant: BandInterpolant
    band_factor: PeriodicSpline
    product: ProductObservable
    descriptor: ObservableDescriptor
    gates: dict[str, GateRecord] = field(default_factory=dict)

    def scalar_symbol(self, r, k) -> np.ndarray:
        """ρ_eff(r)·⟨φ(k), I φ(k)⟩ at points (M, d)."""
        s = self.solution.weights.lattice.reduced(np.atleast_2d(k))
        return self.product.rho.value(r) * self.band_factor(s)


def _prepare(config: ExperimentConfig, threads: int | None, *, gates: bool = True) -> _Context:
    """Band data, interpolants and the gates that need no propagation."""
    lattice = config.weights.lattice
    grid = monkhorst_grid(lattice, config.kgrid)
    solution = band_structure(config.weights, config.basis, grid, config.band, threads=threads)

    geometry = band_geometry(solution, config.band, threads=threads)
    interpolant = BandInterpolant.from_geometry(geometry)

    product = ProductObservable(config.effective_region(), config.observable, config.indices)
    vectors = solution.band_vectors(config.band)
    if product.block is None:
        factor = np.ones(len(vectors))
    else:
        form = product.form(config.basis)
        factor = np.einsum("ki,ij,kj->k", vectors.conj(), form, vectors).real
    band_factor = PeriodicSpline(factor, grid.shape, grid.shift)

    descriptor = ObservableDescriptor(HARNESS_KINDS[config.observable], config.region, config.indices)
    checks = _band_gates(config, solution, threads) if gates else {}
    return _Context(config, solution, interpolant, band_factor, product, descriptor, checks)


def _flow_name(flavor: Flavor, flow: FlowChoice) -> str:
    if flow == "leading":
        return "leading"
    return "scalar" if flavor == "scalar" else "nonscalar"


def _transport(model: DispersionModel, flow: str, points: np.ndarray, t: float, tol: Tolerances):
    d = model.dimension
    if t == 0:
        return points[:, :d], points[:, d:]
    moved = push_ensemble(model, flow, points, t, tol)
    return moved.r, moved.k


def _rhs_scalar(ctx: _Context, grid: WignerGrid, model: DispersionModel, flow: FlowChoice, t: float) -> float:
    tol = ctx.config.tolerances
    pts, weights = grid.points()
    keep = grid.significant(tol.significant).ravel()
    r, k = _transport(model, _flow_name("scalar", flow), pts[keep], t, Tolerances(tol.rtol, tol.atol))
    return float(np.sum(ctx.scalar_symbol(r, k) * weights[keep]))


def _rhs_nonscalar(
    ctx: _Context, state: FieldState, grid: WignerGrid, model: DispersionModel, flow: FlowChoice, t: float
) -> float:
    """⟨f_ro∘Φ_t⟩ with transported coefficients and fiber matrices at the initial point."""
    config, op = ctx.config, state.op
    tol = config.tolerances
    d = op.ndim
    lam = op.lam if flow == "corrected" else 0.0

    mask = grid.significant(tol.significant)
    bins = [tuple(int(x) for x in row) for row in np.argwhere(mask)]
    pts, _ = grid.points()
    r_t, k_t = _transport(
        model, _flow_name("nonscalar", flow), pts[mask.ravel()], t, Tolerances(tol.rtol, tol.atol)
    )
    moved = {key: (r_t[i], k_t[i]) for i, key in enumerate(bins)}

    def symbol(b, p):
        r, k = moved[b + p]
        coefficients = fro_symbol(
            ctx.solution, config.modulation, ctx.product, r, k, lam, form="general", band=config.band
        ).coefficients
        data = op.fiber(p, config.band)
        pi1 = pi1_matrix(data, config.modulation, grid.r[b]) if lam else np.zeros((op.basis.dim,) * 2)
        return assemble_fro(data, pi1, lam, coefficients)

    return matrix_wigner_contract(state, symbol, grid=grid, significant=tol.significant)


# --- Reports ---


@dataclass(frozen=True)
class GateRecord:
    value: float
    threshold: float
    passed: bool


@dataclass(frozen=True, eq=False)
class EgorovReport:
    rows: list[dict]
    gates: dict[str, GateRecord]
    slopes: dict[float, SlopeFit | str]
    error_budget: dict[str, float]
    provenance: dict
    diagnostics: dict
    wall_clock: float = 0.0

    @property
    def passed(self) -> bool:
        return all(g.passed for g in self.gates.values())

    def errors(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        rows = [row for row in self.rows if row["t"] == t]
        return np.array([r["lam"] for r in rows]), np.array([r["error"] for r in rows])

    def payload(self) -> dict:
        """JSON-ready report without wall-clock data."""
        slopes = {}
        for t, fit in self.slopes.items():
            slopes[repr(float(t))] = fit if isinstance(fit, str) else fit.__dict__
        return {
            "rows": self.rows,
            "gates": {name: g.__dict__ for name, g in self.gates.items()},
            "slopes": slopes,
            "error_budget": self.error_budget,
            "provenance": self.provenance,
            "diagnostics": self.diagnostics,
        }


@dataclass(frozen=True)
class _LambdaRun:
    lam: float
    rows: list[dict]
    periodization: float
    boundary_mass: float
    quadrature: float
    quantization: float
    residue: float


def _fit_all(rows: list[dict], times: Sequence[float], key: str = "error") -> dict[float, SlopeFit | str]:
    slopes: dict[float, SlopeFit | str] = {}
    for t in times:
        if t == 0:
            continue
        sel = [r for r in rows if r["t"] == t]
        try:
            slopes[t] = slope_fit([r["lam"] for r in sel], [r[key] for r in sel])
        except NoiseFloorError as e:
            slopes[t] = str(e)
    return slopes


def _run_lambda(ctx: _Context, lam: float) -> _LambdaRun:
    config = ctx.config
    tol = config.tolerances
    op = config.supercell(lam)
    periodization = max(op.boundary_variation().values())
    state = config.wavepacket(op)
    grid = reduced_wigner(state, check=False)
    model = DispersionModel(ctx.interpolant, config.modulation, lam)
    observable = quantize_observable(op, ctx.descriptor)

    rows = []
    psi, now = state.psi, 0.0
    worst_mass = boundary_mass(state)
    for t in sorted(config.times):
        psi = propagate(op, psi, t - now, tol.krylov, krylov_dim=config.krylov_dim)
        now = t
        worst_mass = max(worst_mass, boundary_mass(FieldState(op, psi, state.norm)))
        lhs = expectation(psi, observable)
        if config.flavor == "scalar":
            rhs = _rhs_scalar(ctx, grid, model, config.flow, t)
        else:
            rhs = _rhs_nonscalar(ctx, state, grid, model, config.flow, t)
        rows.append({"lam": lam, "t": t, "lhs": lhs, "rhs": rhs, "error": abs(lhs - rhs)})
        logger.info("lambda=%g t=%g: lhs=%.10g rhs=%.10g", lam, t, lhs, rhs)

    quadrature = abs(expectation(state.psi, observable) - _rhs_scalar(ctx, grid, model, config.flow, 0.0))
    rho = config.region
    weyl = weyl_apply(op, rho, lambda k: np.ones(k.shape[:-1]), state.psi)
    quantization = op.norm(weyl - rho.value(op.r)[..., None] * state.psi) / state.norm

    return _LambdaRun(lam, rows, periodization, worst_mass, quadrature, quantization, grid.residue)


def _band_gates(config: ExperimentConfig, solution: BlochSolution, threads: int | None) -> dict[str, GateRecord]:
    """Convergence, gap and resolvent tail over the k-grid that feeds the ray side."""
    tol = config.tolerances
    convergence = self_convergence(
        config.weights,
        solution.kpoints,
        config.band,
        config.basis.gmax,
        sector=config.basis.sector,
        threads=threads,
        coarse=solution,
    )
    gap = check_gap(solution, config.band, margin_floor=tol.gap)

    def tail(k) -> float:
        try:
            return fiber_data(solution, config.band, k).resolvent().tail
        except GapError:
            return math.inf

    with ThreadPoolExecutor(max_workers=threads) as pool:
        worst_tail = max(pool.map(tail, [*solution.kpoints, config.k0]))

    return {
        "self_convergence": GateRecord(convergence, tol.self_convergence, convergence <= tol.self_convergence),
        "gap": GateRecord(gap.margin, tol.gap, gap.passed),
        "resolvent_tail": GateRecord(worst_tail, tol.resolvent_tail, worst_tail <= tol.resolvent_tail),
    }


def _sweep_gates(config: ExperimentConfig, runs: list[_LambdaRun]) -> dict[str, GateRecord]:
    tol = config.tolerances
    periodization = max(run.periodization for run in runs)
    mass = max(run.boundary_mass for run in runs)
    return {
        "boundary_mass": GateRecord(mass, tol.boundary_mass, mass <= tol.boundary_mass),
        "periodization": GateRecord(periodization, tol.periodization, periodization <= tol.periodization),
    }


def _interpolation_error(ctx: _Context) -> float:
    try:
        data = fiber_data(ctx.solution, ctx.config.band, ctx.config.k0)
        velocity = data.velocity
    except GapError:
        return math.inf
    k0 = ctx.config.k0[None]
    return max(
        abs(float(ctx.interpolant.omega(k0)[0]) - data.omega),
        float(np.max(np.abs(ctx.interpolant.velocity(k0)[0] - velocity))),
    )


def _report(
    config: ExperimentConfig, ctx: _Context, runs: list[_LambdaRun], gates: dict[str, GateRecord], start: float
) -> EgorovReport:
    rows = [row for run in runs for row in run.rows]
    passed = bool(runs) and all(g.passed for g in gates.values())
    budget = {"resolvent_tail": gates["resolvent_tail"].value, "interpolation": _interpolation_error(ctx)}
    diagnostics = {"flavor": config.flavor, "flow": config.flow}
    if runs:
        smallest = runs[-1]
        budget.update(quadrature=smallest.quadrature, quantization=smallest.quantization)
        diagnostics.update(
            cells={repr(run.lam): list(config.cells(run.lam)) for run in runs},
            wigner_residue=max(run.residue for run in runs),
        )
    return EgorovReport(
        rows=rows,
        gates=gates,
        slopes=_fit_all(rows, config.times) if passed else {},
        error_budget=budget,
        provenance={**config.provenance, "version": __version__, "seed": config.seed},
        diagnostics=diagnostics,
        wall_clock=time.perf_counter() - start,
    )


def run_egorov(config: ExperimentConfig, *, strict: bool = True, threads: int | None = None) -> EgorovReport:
    """Run the λ-sweep; with ``strict`` a failed gate raises GateFailure carrying the report.

    Gates on the band data are checked first. If one fails, no λ is propagated.
    """
    start = time.perf_counter()
    ctx = _prepare(config, threads)

    failed = [name for name, gate in ctx.gates.items() if not gate.passed]
    if failed:
        report = _report(config, ctx, [], ctx.gates, start)
        if strict:
            raise GateFailure(failed[0], report)
        logger.error("gates %s failed; the sweep was skipped", ", ".join(failed))
        return report

    with ThreadPoolExecutor(max_workers=threads) as pool:
        runs = list(pool.map(lambda lam: _run_lambda(ctx, lam), config.lams))

    gates = {**ctx.gates, **_sweep_gates(config, runs)}
    report = _report(config, ctx, runs, gates, start)
    if strict:
        for name, gate in gates.items():
            if not gate.passed:
                raise GateFailure(name, report)
    return report


# --- Pipeline cross-check ---


@dataclass(frozen=True, eq=False)
class FlowComparison:
    rows: list[dict]
    slopes: dict[float, SlopeFit | str]


def compare_flows(config: ExperimentConfig, *, threads: int | None = None) -> FlowComparison:
    """Scalar pipeline ⟨f∘Φ_t⟩ against the matrix pipeline ⟨f_ro∘Φ_t⟩ for the same observable."""
    ctx = _prepare(config, threads, gates=False)

    def per_lambda(lam):
        op = config.supercell(lam)
        state = config.wavepacket(op)
        grid = reduced_wigner(state, check=False)
        model = DispersionModel(ctx.interpolant, config.modulation, lam)
        rows = []
        for t in config.times:
            scalar = _rhs_scalar(ctx, grid, model, config.flow, t)
            nonscalar = _rhs_nonscalar(ctx, state, grid, model, config.flow, t)
            rows.append(
                {"lam": lam, "t": t, "scalar": scalar, "nonscalar": nonscalar, "difference": abs(scalar - nonscalar)}
            )
        return rows

    with ThreadPoolExecutor(max_workers=threads) as pool:
        rows = [row for chunk in pool.map(per_lambda, config.lams) for row in chunk]
    return FlowComparison(rows, _fit_all(rows, config.times, key="difference"))
