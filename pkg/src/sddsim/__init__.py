"""Simulation and well-posedness diagnostics for equations with
discrete state-dependent delay (ODE systems and 1-D parabolic PDEs)."""

from .history import (
    HistorySegment,
    SegmentView,
    SpaceMeta,
    StateVector,
    Trajectory,
    make_history,
    ode_space,
    pde_space,
)
from .delay import (
    AffineMap,
    ConstantDelay,
    IntegralInnerDelay,
    IntegralOuterDelay,
    NestedPointDelay,
    OpaqueDelay,
    SegmentReport,
    SumOfNestedDelay,
    TableMap,
    UserMap,
    estimate_local_lipschitz,
    verify_ignorance,
)
from .operators import (
    LocalNonlinearity,
    NicholsonNonlinearity,
    NonlocalNonlinearity,
    ZeroNonlinearity,
    build_dirichlet_laplacian,
    build_ode_diag,
    gaussian_kernel,
    lipschitz_bound,
)
from .solver import ProblemSpec, SolverConfig, evolution_map, mild_residual, solve

__version__ = "0.1.0"

__all__ = [
    "HistorySegment",
    "SegmentView",
    "SpaceMeta",
    "StateVector",
    "Trajectory",
    "make_history",
    "ode_space",
    "pde_space",
    "AffineMap",
    "ConstantDelay",
    "IntegralInnerDelay",
    "IntegralOuterDelay",
    "NestedPointDelay",
    "OpaqueDelay",
    "SegmentReport",
    "SumOfNestedDelay",
    "TableMap",
    "UserMap",
    "estimate_local_lipschitz",
    "verify_ignorance",
    "LocalNonlinearity",
    "NicholsonNonlinearity",
    "NonlocalNonlinearity",
    "ZeroNonlinearity",
    "build_dirichlet_laplacian",
    "build_ode_diag",
    "gaussian_kernel",
    "lipschitz_bound",
    "ProblemSpec",
    "SolverConfig",
    "evolution_map",
    "mild_residual",
    "solve",
    "__version__",
]
