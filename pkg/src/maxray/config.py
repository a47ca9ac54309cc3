"""TOML run configuration.

Each table maps onto a frozen dataclass; unknown and missing keys are errors.
Library callers can build the same dataclasses directly.
"""

from __future__ import annotations

import math
import tomllib
from dataclasses import MISSING, dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .errors import ConfigError, MaxrayError
from .lattice import Lattice, PlaneWaveBasis, build_lattice, cubic_lattice, hexagonal_lattice, planewave_set, square_lattice
from .materials import MaterialWeights, make_homogeneous, make_rod_lattice
from .modulation import Constant, ModulationProfile, Profile, make_profile, modulation_profile

SCHEMA_VERSION = 1


def _section[T](cls: type[T], table: Any, name: str) -> T:
    if not isinstance(table, Mapping):
        raise ConfigError(f"[{name}] must be a table")
    known = {f.name for f in fields(cls)}
    for key in table:
        if key not in known:
            raise ConfigError(f"unknown key '{name}.{key}'")
    for f in fields(cls):
        if f.default is MISSING and f.default_factory is MISSING and f.name not in table:
            raise ConfigError(f"missing key '{name}.{f.name}'")
    return cls(**table)


def _profile(table: Mapping, name: str) -> Profile:
    if not isinstance(table, Mapping) or "kind" not in table:
        raise ConfigError(f"[{name}] needs a 'kind'")
    params = {k: v for k, v in table.items() if k != "kind"}
    try:
        return make_profile(table["kind"], **params)
    except MaxrayError as e:
        raise ConfigError(f"[{name}]: {e}") from e


# --- Sections ---


@dataclass(frozen=True)
class LatticeConfig:
    kind: str = "square"
    vectors: list | None = None

    def build(self) -> Lattice:
        match self.kind:
            case "square":
                return square_lattice()
            case "hexagonal":
                return hexagonal_lattice()
            case "cubic":
                return cubic_lattice()
            case "custom":
                if self.vectors is None:
                    raise ConfigError("a custom lattice needs 'lattice.vectors'")
                return build_lattice(len(self.vectors), self.vectors)
        raise ConfigError(f"unknown lattice kind '{self.kind}'")


def gyro_tensor(eps: float, gyration: float) -> np.ndarray:
    """ε with an imaginary xy off-diagonal, the gyroelectric form."""
    out = eps * np.eye(3, dtype=complex)
    out[0, 1], out[1, 0] = 1j * gyration, -1j * gyration
    return out


@dataclass(frozen=True)
class MaterialConfig:
    kind: str = "vacuum"
    epsilon: float = 1.0
    mu: float = 1.0
    gyration: float = 0.0
    radius: float = 0.2
    eps_rod: float = 8.9
    eps_bg: float = 1.0
    smoothing_width: float = 0.02
    resolution: int = 32

    def build(self, lattice: Lattice) -> MaterialWeights:
        match self.kind:
            case "vacuum":
                return make_homogeneous(1.0, lattice=lattice)
            case "homogeneous":
                return make_homogeneous(gyro_tensor(self.epsilon, self.gyration), self.mu, lattice=lattice)
            case "rods":
                return make_rod_lattice(
                    lattice,
                    self.radius,
                    gyro_tensor(self.eps_rod, self.gyration),
                    self.eps_bg,
                    self.smoothing_width,
                    self.resolution,
                )
        raise ConfigError(f"unknown material kind '{self.kind}'")


@dataclass(frozen=True)
class BasisConfig:
    gmax: float  # in units of 2π/|a|
    sector: str = "full"

    def build(self, lattice: Lattice) -> PlaneWaveBasis:
        if self.sector not in ("full", "te", "tm"):
            raise ConfigError(f"unknown sector '{self.sector}'")
        return planewave_set(lattice, self.gmax * 2 * math.pi, self.sector)


@dataclass(frozen=True)
class KGridConfig:
    counts: list[int] | None = None
    shift: list[float] | None = None
    path: list | None = None
    points_per_segment: int = 20


@dataclass(frozen=True)
class BandConfig:
    index: int = 1
    n_bands: int | None = None


@dataclass(frozen=True)
class ModulationConfig:
    mode: str = "split"
    epsilon: dict = field(default_factory=lambda: {"kind": "constant"})
    mu: dict | None = None

    def build(self) -> ModulationProfile:
        table = dict(self.epsilon)
        kind = table.pop("kind", None)
        if kind is None:
            raise ConfigError("[modulation.epsilon] needs a 'kind'")
        mu = _profile(self.mu, "modulation.mu") if self.mu is not None else Constant()
        try:
            return modulation_profile(kind, mode=self.mode, mu=mu, **table)
        except (MaxrayError, TypeError) as e:
            raise ConfigError(f"[modulation]: {e}") from e


@dataclass(frozen=True)
class StateConfig:
    r0: list[float]
    k0: list[float]
    width: float
    order: int = 0
    proceed: bool = False


@dataclass(frozen=True)
class ObservableConfig:
    kind: str = "energy"
    indices: list[int] = field(default_factory=list)
    flavor: str = "scalar"
    region: dict = field(default_factory=lambda: {"kind": "constant"})

    def region_profile(self) -> Profile:
        return _profile(self.region, "observable.region")


@dataclass(frozen=True)
class SweepConfig:
    lambdas: list[float]
    times: list[float]
    extent: list[float]
    samples: int = 9
    flow: str = "corrected"
    krylov_dim: int = 30


@dataclass(frozen=True)
class ToleranceConfig:
    rtol: float = 1e-12
    atol: float = 1e-14
    krylov: float = 1e-10
    self_convergence: float = 1e-4
    gap: float = 1e-6
    boundary_mass: float = 1e-8
    resolvent_tail: float = 1e-6
    periodization: float = 1e-8
    significant: float = 1e-10
    drift: float = 1e-8


@dataclass(frozen=True)
class RaysConfig:
    points: list[list[float]]
    t_final: float
    lam: float
    samples: int = 200
    flows: list[str] = field(default_factory=lambda: ["scalar", "nonscalar"])


@dataclass(frozen=True)
class OutputConfig:
    tensors: bool = True
    prefix: str = ""


SECTIONS: dict[str, type] = {
    "lattice": LatticeConfig,
    "material": MaterialConfig,
    "basis": BasisConfig,
    "kgrid": KGridConfig,
    "band": BandConfig,
    "modulation": ModulationConfig,
    "state": StateConfig,
    "observable": ObservableConfig,
    "sweep": SweepConfig,
    "tolerances": ToleranceConfig,
    "rays": RaysConfig,
    "output": OutputConfig,
}

# tables that define a solved crystal; their hash keys the fixture cache
FIXTURE_SECTIONS = ("lattice", "material", "basis", "kgrid", "band")


@dataclass(frozen=True, eq=False)
class RunConfig:
    raw: dict
    lattice: LatticeConfig = field(default_factory=LatticeConfig)
    material: MaterialConfig = field(default_factory=MaterialConfig)
    basis: BasisConfig | None = None
    kgrid: KGridConfig | None = None
    band: BandConfig = field(default_factory=BandConfig)
    modulation: ModulationConfig = field(default_factory=ModulationConfig)
    state: StateConfig | None = None
    observable: ObservableConfig = field(default_factory=ObservableConfig)
    sweep: SweepConfig | None = None
    tolerances: ToleranceConfig = field(default_factory=ToleranceConfig)
    rays: RaysConfig | None = None
    output: OutputConfig = field(default_factory=OutputConfig)

    def require(self, *names: str) -> None:
        for name in names:
            if getattr(self, name) is None:
                raise ConfigError(f"missing section [{name}]")

    @property
    def fixture(self) -> dict:
        return {name: self.raw.get(name) for name in FIXTURE_SECTIONS}


def parse_config(data: Mapping) -> RunConfig:
    data = dict(data)
    version = data.pop("schema_version", None)
    if version is None:
        raise ConfigError("missing key 'schema_version'")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"schema_version {version} is not supported (expected {SCHEMA_VERSION})")

    sections = {}
    for name, table in data.items():
        if name not in SECTIONS:
            raise ConfigError(f"unknown section [{name}]")
        sections[name] = _section(SECTIONS[name], table, name)
    return RunConfig(raw={"schema_version": version, **data}, **sections)


def load_config(path: str | Path) -> RunConfig:
    try:
        with Path(path).open("rb") as f:
            data = tomllib.load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"config file {path} not found") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from e
    return parse_config(data)


# --- Fixtures ---


@dataclass(frozen=True, eq=False)
class Fixture:
    lattice: Lattice
    weights: MaterialWeights
    basis: PlaneWaveBasis


def build_fixture(config: RunConfig) -> Fixture:
    config.require("basis")
    try:
        lattice = config.lattice.build()
        weights = config.material.build(lattice)
    except MaxrayError as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"bad fixture: {e}") from e
    return Fixture(lattice, weights, config.basis.build(lattice))
