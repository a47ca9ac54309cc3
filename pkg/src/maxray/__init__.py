__version__ = "0.1.0"

from .errors import (
    MaxrayError as MaxrayError,
    BoundaryMassError as BoundaryMassError,
    ConfigError as ConfigError,
    DegeneracyError as DegeneracyError,
    DegenerateLatticeError as DegenerateLatticeError,
    GapError as GapError,
    GateFailure as GateFailure,
    IntegrationError as IntegrationError,
    LatticeMismatchError as LatticeMismatchError,
    NoiseFloorError as NoiseFloorError,
    PeriodizationError as PeriodizationError,
    PropagationError as PropagationError,
    ScaleSeparationError as ScaleSeparationError,
    SolverError as SolverError,
    SymmetryNotApplicable as SymmetryNotApplicable,
    WeightError as WeightError,
)
from .lattice import (
    Lattice as Lattice,
    PlaneWaveBasis as PlaneWaveBasis,
    KGrid as KGrid,
    KPath as KPath,
    build_lattice as build_lattice,
    square_lattice as square_lattice,
    hexagonal_lattice as hexagonal_lattice,
    cubic_lattice as cubic_lattice,
    planewave_set as planewave_set,
    grid_basis as grid_basis,
    monkhorst_grid as monkhorst_grid,
    kpath as kpath,
)
from .materials import (
    MaterialWeights as MaterialWeights,
    make_homogeneous as make_homogeneous,
    make_rod_lattice as make_rod_lattice,
    vacuum as vacuum,
    validate_weights as validate_weights,
)
from .modulation import (
    Profile as Profile,
    Constant as Constant,
    Gaussian as Gaussian,
    GaussianBump as GaussianBump,
    SmoothRamp as SmoothRamp,
    Product as Product,
    ModulationProfile as ModulationProfile,
    make_profile as make_profile,
    modulation_profile as modulation_profile,
)
from .bloch import (
    BlochSolution as BlochSolution,
    assemble_fiber as assemble_fiber,
    solve_fiber as solve_fiber,
    band_structure as band_structure,
    check_gap as check_gap,
    check_particle_hole as check_particle_hole,
    dos_estimate as dos_estimate,
    dos_exponent as dos_exponent,
    self_convergence as self_convergence,
)
from .geometry import (
    BandGeometry as BandGeometry,
    FiberData as FiberData,
    ProductObservable as ProductObservable,
    SymbolMatrix as SymbolMatrix,
    band_geometry as band_geometry,
    berry_data_fhs as berry_data_fhs,
    chern_number as chern_number,
    dispersion as dispersion,
    fiber_data as fiber_data,
    fro_symbol as fro_symbol,
    group_velocity as group_velocity,
    pi1_symbol as pi1_symbol,
    poynting_vector as poynting_vector,
)
from .supercell import (
    ObservableDescriptor as ObservableDescriptor,
    SupercellOperator as SupercellOperator,
    build_supercell as build_supercell,
    expectation as expectation,
    project_band as project_band,
    propagate as propagate,
    quantize_observable as quantize_observable,
)
from .wigner import (
    FieldState as FieldState,
    WignerGrid as WignerGrid,
    boundary_mass as boundary_mass,
    gaussian_bloch_state as gaussian_bloch_state,
    matrix_wigner_contract as matrix_wigner_contract,
    phase_space_average as phase_space_average,
    reduced_wigner as reduced_wigner,
)
from .egorov import (
    EgorovReport as EgorovReport,
    ExperimentConfig as ExperimentConfig,
    compare_flows as compare_flows,
    run_egorov as run_egorov,
    slope_fit as slope_fit,
)
from .config import RunConfig as RunConfig, load_config as load_config, parse_config as parse_config

from . import rays as rays
