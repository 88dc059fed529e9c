"""Conservative implicit solver for one-dimensional polytropic gas flows in
mass-Lagrangian coordinates (plane, cylindrical and spherical symmetry), with
per-step audits of the discrete conservation laws."""

from .mesh import MassMesh, MeshError, TimeLayer, build_mesh, uniform_mesh
from .state import (
    GridLayer,
    LayerError,
    TwoLayerView,
    backward_s_cellfield,
    cell_average,
    forward_s,
    interp_nodal_pressure,
    time_diff,
    total_cell_quantity,
    total_nodal_quantity,
    weighted,
)
from .scheme import (
    BoundaryCondition,
    ConfigError,
    PressureTrace,
    SchemeParams,
    StepRejected,
    StepReport,
    boundary_residuals,
    effective_cell_pressure,
    r_factor,
    residual_energy,
    residual_eos,
    residual_mass,
    residual_momentum,
    residual_trajectory,
    step,
    step_with_retry,
    viscous_pressure,
)
from .conservation import (
    ALL_LAWS,
    ConservationBudget,
    LawId,
    additional_1_residuals,
    additional_2_residuals,
    audit_all,
    audit_additional_1,
    audit_additional_2,
    audit_center_of_mass,
    audit_energy,
    audit_mass,
    audit_momentum,
    pressure_star,
    write_ledger,
)
from .problems import (
    EulerProfile,
    ProblemError,
    invert_mass_coordinate,
    library_names,
    make_initial_layer,
    mass_coordinate,
    problem_library,
)
from .snapshots import SnapshotError, read_snapshot, read_snapshot_meta, write_snapshot
from .cli import (
    RunConfig,
    SimulationResult,
    audit_snapshots,
    convergence_study,
    load_config,
    resolve_config,
    run_simulation,
    with_resolution,
)

__version__ = "0.1.0"

__all__ = [
    "ALL_LAWS",
    "BoundaryCondition",
    "ConfigError",
    "ConservationBudget",
    "EulerProfile",
    "GridLayer",
    "LawId",
    "LayerError",
    "MassMesh",
    "MeshError",
    "PressureTrace",
    "ProblemError",
    "RunConfig",
    "SchemeParams",
    "SimulationResult",
    "SnapshotError",
    "StepRejected",
    "StepReport",
    "TimeLayer",
    "TwoLayerView",
    "additional_1_residuals",
    "additional_2_residuals",
    "audit_all",
    "audit_additional_1",
    "audit_additional_2",
    "audit_center_of_mass",
    "audit_energy",
    "audit_mass",
    "audit_momentum",
    "audit_snapshots",
    "backward_s_cellfield",
    "boundary_residuals",
    "build_mesh",
    "cell_average",
    "convergence_study",
    "effective_cell_pressure",
    "forward_s",
    "interp_nodal_pressure",
    "invert_mass_coordinate",
    "library_names",
    "load_config",
    "make_initial_layer",
    "mass_coordinate",
    "pressure_star",
    "problem_library",
    "r_factor",
    "read_snapshot",
    "read_snapshot_meta",
    "resolve_config",
    "residual_energy",
    "residual_eos",
    "residual_mass",
    "residual_momentum",
    "residual_trajectory",
    "run_simulation",
    "step",
    "step_with_retry",
    "time_diff",
    "total_cell_quantity",
    "total_nodal_quantity",
    "uniform_mesh",
    "viscous_pressure",
    "weighted",
    "with_resolution",
    "write_ledger",
    "write_snapshot",
]
