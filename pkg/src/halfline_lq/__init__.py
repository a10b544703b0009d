"""Stochastic LQ boundary control of the heat equation on the half-line.

The state lives in a weighted space L^2((0, inf); rho dxi) carried by a graded
mesh; control and noise act through the Dirichlet boundary value at xi = 0.
"""

from . import _backend
from .config import ProblemConfig, RunConfig, load_config
from .errors import ConfigError, HalflineLQError, NumericError, SimulationError, SolverError
from .lq_control import (
    CostReport,
    evaluate_cost,
    fundamental_identity_residual,
    optimality_check,
    select_trace_coeff,
    value_function,
)
from .operators import (
    BoundaryInput,
    LinOp,
    Spectrum,
    apply_semigroup_kernel,
    boundary_input,
    dirichlet_laplacian,
    dirichlet_map,
    fractional_power,
    gamma_integral,
    heat_kernel,
    regularity_integral,
    semigroup_matrix,
    semigroup_on_exponential,
    yosida,
)
from .riccati import CostSpec, RiccatiSolution, gain, solve_riccati_mild, solve_riccati_ode, trace_term
from .stochastic import (
    ControlSignal,
    NoiseConfig,
    TrajectoryEnsemble,
    brownian_increments,
    moment_recursion,
    simulate_closed_loop,
    simulate_mild,
    stochastic_convolution,
)
from .weighted_space import Gram, Grid, WeightSpec, build_grid, from_ortho, inner, norm, to_ortho, weight_at

__version__ = "0.1.0"
BACKEND = _backend.NAME

__all__ = [
    "BACKEND",
    "BoundaryInput",
    "ConfigError",
    "ControlSignal",
    "CostReport",
    "CostSpec",
    "Gram",
    "Grid",
    "HalflineLQError",
    "LinOp",
    "NoiseConfig",
    "NumericError",
    "ProblemConfig",
    "RiccatiSolution",
    "RunConfig",
    "SimulationError",
    "SolverError",
    "Spectrum",
    "TrajectoryEnsemble",
    "WeightSpec",
    "apply_semigroup_kernel",
    "boundary_input",
    "brownian_increments",
    "build_grid",
    "dirichlet_laplacian",
    "dirichlet_map",
    "evaluate_cost",
    "fractional_power",
    "from_ortho",
    "fundamental_identity_residual",
    "gain",
    "gamma_integral",
    "heat_kernel",
    "inner",
    "load_config",
    "moment_recursion",
    "norm",
    "optimality_check",
    "regularity_integral",
    "select_trace_coeff",
    "semigroup_matrix",
    "semigroup_on_exponential",
    "simulate_closed_loop",
    "simulate_mild",
    "solve_riccati_mild",
    "solve_riccati_ode",
    "stochastic_convolution",
    "to_ortho",
    "trace_term",
    "value_function",
    "weight_at",
    "yosida",
]
