"""Batch front-end: ``maxray <subcommand> --config run.toml --out DIR``.

Every subcommand writes its artifacts plus a ``manifest.json`` hashing them.
Exit codes: 0 on success, 1 on a usage or config error, 2 on a failed gate.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Callable, Sequence


from . import __version__
from .bloch import BlochSolution, band_structure, check_gap, dos_estimate
from .config import Fixture, RunConfig, build_fixture, load_config
from .egorov import EgorovReport, ExperimentConfig, compare_flows, run_egorov
from .errors import ConfigError, GateFailure, MaxrayError
from .geometry import band_geometry
from .io import FixtureCache, RunManifest, sha256_json, write_csv, write_json, write_tensor
from .lattice import kpath, monkhorst_grid
from .materials import validate_weights
from .rays import BandInterpolant, DispersionModel, RayTracer, Tolerances
from .wigner import boundary_mass, reduced_wigner

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_USAGE, EXIT_GATE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class Run:
    """Output directory, manifest and options shared by one subcommand invocation."""

    def __init__(self, name: str, config: RunConfig, config_path: Path, out: Path, threads: int | None, seed: int):
        self.config = config
        self.out = out
        self.threads = threads
        self.seed = seed
        self.prefix = config.output.prefix
        self.manifest = RunManifest(name, sha256_json(config.raw), __version__, inputs=[str(config_path)])
        out.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        return self.out / f"{self.prefix}{name}"

    def csv(self, name: str, columns, rows) -> None:
        self.manifest.add(write_csv(self.path(name), columns, rows))

    def json(self, name: str, data) -> None:
        self.manifest.add(write_json(self.path(name), data))

    def tensor(self, name: str, array, axes=None) -> None:
        if self.config.output.tensors:
            self.manifest.add(write_tensor(self.path(name), array, axes))

    def finish(self) -> Path:
        return self.manifest.write(self.out)


# --- Shared fixtures ---


def _n_bands(config: RunConfig) -> int:
    return config.band.n_bands or config.band.index


_CACHED = ("kpoints", "spectra", "values", "vectors", "npos", "labels")


def _grid_solution(config: RunConfig, fixture: Fixture, threads: int | None) -> BlochSolution:
    """Bands on the Monkhorst-Pack grid, through the fixture cache when MAXRAY_CACHE is set."""
    kg = config.kgrid
    if kg is None or kg.counts is None:
        raise ConfigError("missing key 'kgrid.counts'")
    grid = monkhorst_grid(fixture.lattice, kg.counts, kg.shift)
    n_bands = _n_bands(config)

    cache = FixtureCache()
    key = sha256_json({**config.fixture, "n_bands": n_bands})
    cached = cache.load(key, _CACHED)
    if cached is not None:
        return BlochSolution(
            fixture.weights,
            fixture.basis,
            cached["kpoints"],
            cached["spectra"],
            cached["values"],
            cached["vectors"],
            cached["npos"],
            cached["labels"],
            grid,
        )

    solution = band_structure(fixture.weights, fixture.basis, grid, n_bands, threads=threads)
    cache.store(
        key,
        {
            "kpoints": solution.kpoints,
            "spectra": solution.spectra,
            "values": solution.values,
            "vectors": solution.vectors,
            "npos": solution.npos,
            "labels": solution.labels,
        },
    )
    return solution


def _axis_names(prefix: str, d: int) -> list[str]:
    return [f"{prefix}{i + 1}" for i in range(d)]


# --- Subcommands ---


def cmd_bands(run: Run) -> int:
    """Band values along a k-path and on a grid, with DOS and gap margins."""
    config = run.config
    config.require("kgrid")
    fixture = build_fixture(config)
    lattice = fixture.lattice
    d = lattice.dimension
    n_bands = _n_bands(config)
    bands = [f"omega_{n}" for n in range(1, n_bands + 1)]

    report = validate_weights(fixture.weights)
    run.manifest.gates["weights"] = report.passed
    run.tensor("weights.mxt", fixture.weights.samples, _axis_names("y", d) + ["row", "col"])

    kg = config.kgrid
    if kg.path is not None:
        path = kpath(lattice, [(label, s) for label, s in kg.path], kg.points_per_segment)
        solution = band_structure(fixture.weights, fixture.basis, path, n_bands, threads=run.threads)
        labels = dict(path.labels)
        run.csv(
            "bands_path.csv",
            ["index", "label", "distance"] + _axis_names("k", d) + bands,
            (
                [i, labels.get(i, ""), path.distance[i], *path.points[i], *solution.values[i]]
                for i in range(path.size)
            ),
        )

    if kg.counts is not None:
        solution = _grid_solution(config, fixture, run.threads)
        run.tensor("bands.mxt", solution.values, ["k", "band"])
        run.tensor("kpoints.mxt", solution.kpoints, ["k", "axis"])
        dos = dos_estimate(solution)
        run.csv("dos.csv", ["omega", "density"], zip(dos.omega, dos.density))
        gaps = {}
        for n in range(1, n_bands + 1):
            gap = check_gap(solution, n, margin_floor=config.tolerances.gap)
            gaps[n] = {"margin": gap.margin, "ground": gap.ground, "passed": gap.passed}
        run.json("gaps.json", gaps)
        run.manifest.gates["gap"] = gaps[config.band.index]["passed"]

    return EXIT_OK


def cmd_geometry(run: Run) -> int:
    """Velocity, Poynting vector, Berry curvature and Chern number on the grid."""
    config = run.config
    fixture = build_fixture(config)
    d = fixture.lattice.dimension
    solution = _grid_solution(config, fixture, run.threads)
    band = config.band.index
    geometry = band_geometry(solution, band, threads=run.threads)

    curvature = geometry.curvature_grid.reshape(len(solution.kpoints), -1)
    curvature_columns = ["curvature"] if d == 2 else ["curvature_23", "curvature_31", "curvature_12"]
    run.csv(
        "geometry.csv",
        _axis_names("k", d)
        + ["omega"]
        + _axis_names("v", d)
        + ["poynting_x", "poynting_y", "poynting_z"]
        + curvature_columns,
        (
            [*k, w, *v, *p, *c]
            for k, w, v, p, c in zip(
                solution.kpoints,
                geometry.omega_grid,
                geometry.velocity_grid,
                geometry.poynting_grid,
                curvature,
            )
        ),
    )
    run.tensor("curvature.mxt", geometry.curvature_grid, ["k"] if d == 2 else ["k", "plane"])

    gap = check_gap(solution, band, margin_floor=config.tolerances.gap)
    run.json("geometry.json", {"band": band, "chern": geometry.chern, "gap_margin": gap.margin})
    run.manifest.gates["gap"] = gap.passed
    return EXIT_OK


def cmd_rays(run: Run) -> int:
    """Ray trajectories for every configured flow."""
    config = run.config
    config.require("rays")
    fixture = build_fixture(config)
    lattice = fixture.lattice
    d = lattice.dimension
    rays = config.rays

    solution = _grid_solution(config, fixture, run.threads)
    interpolant = BandInterpolant.from_geometry(band_geometry(solution, config.band.index, threads=run.threads))
    model = DispersionModel(interpolant, config.modulation.build(), rays.lam)
    tol = Tolerances(config.tolerances.rtol, config.tolerances.atol, drift=config.tolerances.drift)

    rows, drift, conserved = [], {}, True
    for name in rays.flows:
        tracer = RayTracer(model, name)
        for point in rays.points:
            if len(point) != 2 * d:
                raise ConfigError(f"ray start points need {2 * d} entries [r | k reduced]")
            tracer.add(point[:d], lattice.cartesian(point[d:]))
        trajectories = tracer.trace(rays.t_final, tol, samples=rays.samples, threads=run.threads)
        drift[name] = [tr.drift for tr in trajectories]
        conserved = conserved and all(tr.stats["drift_ok"] for tr in trajectories)
        for i, tr in enumerate(trajectories):
            rows.extend([name, i, t, *r, *k, w] for t, r, k, w in zip(tr.t, tr.r, tr.k, tr.omega))

    run.csv("rays.csv", ["flow", "ray", "t"] + _axis_names("r", d) + _axis_names("k", d) + ["omega"], rows)
    run.json(
        "rays.json",
        {"lam": rays.lam, "drift": drift, "velocity_consistency": model.velocity_consistency()},
    )
    run.manifest.gates["drift"] = conserved
    if not conserved:
        logger.error("Hamiltonian drift above %.1e on at least one ray", tol.drift)
        return EXIT_GATE
    return EXIT_OK


def cmd_wigner(run: Run) -> int:
    """Wigner grids and moments of the initial wavepacket at each λ."""
    experiment = ExperimentConfig.from_config(run.config, seed=run.seed)
    d = experiment.weights.lattice.dimension
    rows = []
    for i, lam in enumerate(experiment.lams):
        op = experiment.supercell(lam)
        state = experiment.wavepacket(op)
        grid = reduced_wigner(state, threads=run.threads)
        moments = grid.moments()
        rows.append([lam, moments["total"], *moments["r"], *moments["k"], grid.residue, boundary_mass(state)])
        run.tensor(f"wigner_{i}.mxt", grid.values, _axis_names("cell", d) + _axis_names("zone", d))
    run.csv(
        "wigner_moments.csv",
        ["lam", "total"] + _axis_names("r", d) + _axis_names("k", d) + ["residue", "boundary_mass"],
        rows,
    )
    return EXIT_OK


def _write_report(run: Run, report: EgorovReport) -> None:
    columns = ["lam", "t", "lhs", "rhs", "error"]
    run.csv("egorov.csv", columns, ([r[c] for c in columns] for r in report.rows))
    slope_rows = []
    for t, fit in report.slopes.items():
        if isinstance(fit, str):
            slope_rows.append([t, "", "", "", "", 0, fit])
        else:
            slope_rows.append([t, fit.slope, fit.intercept, fit.stderr, fit.residual, fit.used, ""])
    run.csv("slopes.csv", ["t", "slope", "intercept", "stderr", "residual", "used", "note"], slope_rows)
    run.json("report.json", report.payload())
    run.manifest.gates.update({name: gate.passed for name, gate in report.gates.items()})


def cmd_egorov(run: Run) -> int:
    """λ-sweep of direct propagation against transported phase-space averages."""
    experiment = ExperimentConfig.from_config(run.config, seed=run.seed)
    report = run_egorov(experiment, strict=False, threads=run.threads)
    _write_report(run, report)
    if experiment.flavor == "nonscalar" and report.passed:
        comparison = compare_flows(experiment, threads=run.threads)
        run.csv(
            "flows.csv",
            ["lam", "t", "scalar", "nonscalar", "difference"],
            ([r[c] for c in ("lam", "t", "scalar", "nonscalar", "difference")] for r in comparison.rows),
        )
    for name, gate in report.gates.items():
        if not gate.passed:
            logger.error("gate %s failed: %.3e against %.3e", name, gate.value, gate.threshold)
            return EXIT_GATE
    for t, fit in report.slopes.items():
        if isinstance(fit, str):
            logger.info("t=%g: %s", t, fit)
        else:
            logger.info("t=%g: slope %.3f (%d points)", t, fit.slope, fit.used)
    return EXIT_OK


COMMANDS: dict[str, Callable[[Run], int]] = {
    "bands": cmd_bands,
    "geometry": cmd_geometry,
    "rays": cmd_rays,
    "wigner": cmd_wigner,
    "egorov": cmd_egorov,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, type=Path, help="TOML run configuration")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--threads", type=int, default=None, help="worker cap for parallel maps")
    common.add_argument("--seed", type=int, default=0, help="seed recorded in the report provenance")
    level = common.add_mutually_exclusive_group()
    level.add_argument("-v", "--verbose", action="store_true")
    level.add_argument("-q", "--quiet", action="store_true")

    parser = _Parser(prog="maxray", description="Photonic-crystal bands, ray optics and λ-sweeps.")
    parser.add_argument("--version", action="version", version=f"maxray {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, fn in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=fn.__doc__)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="[%(module)-12s] %(message)s")

    if args.threads is not None and args.threads < 1:
        logger.error("--threads must be positive")
        return EXIT_USAGE

    try:
        config = load_config(args.config)
        run = Run(args.command, config, args.config, args.out, args.threads, args.seed)
        code = COMMANDS[args.command](run)
        run.finish()
    except GateFailure as e:
        logger.error("%s", e)
        return EXIT_GATE
    except (MaxrayError, ValueError) as e:
        logger.error("%s", e)
        return EXIT_USAGE

    logger.info("wrote %d files to %s", len(run.manifest.outputs), args.out)
    return code


if __name__ == "__main__":
    sys.exit(main())
