"""faultmg: a fault-injection laboratory for two-grid and multigrid solvers.

Builds nested P1 FEM hierarchies for model Poisson problems, runs
fault-free and fault-prone multigrid cycles under a probabilistic model of
hard and silent faults, and measures convergence through Lyapunov spectral
radius estimates, exact second-moment models, and replica-type bounds.
"""

from .discretization import (GridHierarchy, Level, assemble_load,
                             build_hierarchy, green_norm_diagnostic)
from .faults import FaultMoments, FaultSiteConfig, FaultSpec, make_generator
from .solver import (CycleConfig, IterationTrace, SmootherOperator,
                     apply_error_operator, mg_iterate, smooth, solve)
from .analysis import (LyapunovEstimate, SecondMomentModel, lyapunov_estimate,
                       replica_bound, second_moment_assemble, smoother_bound,
                       smoother_bound_gamma, smoother_fault_threshold,
                       term_diagnostics, theory_scaling)

__version__ = "0.1.0"

__all__ = [
    "GridHierarchy", "Level", "assemble_load", "build_hierarchy",
    "green_norm_diagnostic", "FaultMoments", "FaultSiteConfig", "FaultSpec",
    "make_generator", "CycleConfig", "IterationTrace", "SmootherOperator",
    "apply_error_operator", "mg_iterate", "smooth", "solve",
    "LyapunovEstimate", "SecondMomentModel", "lyapunov_estimate",
    "replica_bound", "second_moment_assemble", "smoother_bound",
    "smoother_bound_gamma", "smoother_fault_threshold", "term_diagnostics",
    "theory_scaling", "__version__",
]
