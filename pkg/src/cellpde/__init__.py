"""Cell-population simulation and continuum mechanism learning.

Simulates 1D chains of mechanically coupled cells with stochastic
proliferation, converts the discrete trajectories to density data, and
learns the diffusivity, source, and boundary mechanisms of the matching
conservation PDE by sparse stepwise regression.
"""

from ._kernel import IMPL as KERNEL_IMPL
from ._kernel import IntegrationFailure
from .density import (
    DensityGrid,
    confidence_band,
    ensemble_average,
    node_densities,
    trajectory_to_grid,
)
from .discrete import (
    CellState,
    Fixed,
    Free,
    Hookean,
    InverseHookean,
    Logistic,
    Piecewise,
    SimConfig,
    Trajectory,
    fit_initial_positions,
    realization_seed,
    simulate,
    simulate_ensemble,
)
from .eql import (
    BasisLibrary,
    FitResult,
    LearnSetup,
    PruneConfig,
    StageSpec,
    assemble_system,
    audit_trace,
    least_squares,
    loss,
    power_library,
    prune,
    reciprocal_library,
    sequential_learn,
    stepwise_select,
)
from .fvm import (
    FixedDomain,
    MechanismSet,
    MovingDomain,
    PdeProblem,
    PdeSolution,
    interpolate_solution,
    solve,
    solve_fixed,
    solve_moving,
)
from .harness import (
    ExperimentConfig,
    SweepConfig,
    dump_preset,
    load_config,
    run_experiment,
    run_sweep,
)
from .numdiff import (
    grid_space_derivatives,
    grid_time_derivative,
    leading_edge_velocity,
)
from .presets import PRESETS, Preset, StageParams, UnknownPresetError, \
    get_preset, preset_names

__version__ = "0.1.0"

__all__ = [
    "KERNEL_IMPL",
    "IntegrationFailure",
    "DensityGrid",
    "confidence_band",
    "ensemble_average",
    "node_densities",
    "trajectory_to_grid",
    "CellState",
    "Fixed",
    "Free",
    "Hookean",
    "InverseHookean",
    "Logistic",
    "Piecewise",
    "SimConfig",
    "Trajectory",
    "fit_initial_positions",
    "realization_seed",
    "simulate",
    "simulate_ensemble",
    "BasisLibrary",
    "FitResult",
    "LearnSetup",
    "PruneConfig",
    "StageSpec",
    "assemble_system",
    "audit_trace",
    "least_squares",
    "loss",
    "power_library",
    "prune",
    "reciprocal_library",
    "sequential_learn",
    "stepwise_select",
    "FixedDomain",
    "MechanismSet",
    "MovingDomain",
    "PdeProblem",
    "PdeSolution",
    "interpolate_solution",
    "solve",
    "solve_fixed",
    "solve_moving",
    "ExperimentConfig",
    "SweepConfig",
    "dump_preset",
    "load_config",
    "run_experiment",
    "run_sweep",
    "grid_space_derivatives",
    "grid_time_derivative",
    "leading_edge_velocity",
    "PRESETS",
    "Preset",
    "StageParams",
    "UnknownPresetError",
    "get_preset",
    "preset_names",
    "__version__",
]
