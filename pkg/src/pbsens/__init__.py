"""Parameter sensitivities S(t) = dx/dp for ODE systems.

The package computes the sensitivity matrix of a parametrised ODE along a
numerical trajectory three ways: truncated Peano-Baker-series propagation of
the state-transition matrix (plain and with per-interval refinement plus an
equilibrium switch), a constant-coefficient exponential update, and a
forward-sensitivity reference that integrates states and sensitivities as one
augmented system.  A benchmark CLI (``pbs-sens``) runs accuracy comparisons,
convergence-order studies and runtime-scaling studies on built-in models.
"""

__version__ = "0.1.0"

from .linalg import (
    NearSingularMatrixWarning,
    SingularMatrixError,
    frobenius_norm,
    mat_exp,
    phi1,
    solve_linear,
)
from .ode import (
    DivergenceError,
    OdeSystem,
    StabilityWarning,
    Trajectory,
    integrate,
    interpolate,
    jittered_grid,
    ramped_grid,
    uniform_grid,
)
from .sensitivity import (
    PbsrConfig,
    SensitivityTrajectory,
    StepJacobians,
    exp_step,
    pbs_phi_backward,
    pbs_phi_forward,
    pbs_step,
    refinement_count,
    run_exp,
    run_pbs_plain,
    run_pbsr,
    switch_to_exp,
)
from .reference import (
    augment_state,
    finite_difference_sensitivity,
    relative_error,
    run_forward_sensitivity,
    split_state,
)
from .models import (
    Model,
    check_jacobian_consistency,
    get_model,
    list_models,
    make_chua,
    make_const_linear,
    make_random_linear,
    make_scalar_decay,
    register_model,
)
from .studies import (
    StudyReport,
    compare_study,
    default_compare_grid,
    convergence_study,
    fit_power_law,
    reference_step,
    run_method,
    scaling_study,
)

__all__ = [
    "__version__",
    "NearSingularMatrixWarning",
    "SingularMatrixError",
    "frobenius_norm",
    "mat_exp",
    "phi1",
    "solve_linear",
    "DivergenceError",
    "OdeSystem",
    "StabilityWarning",
    "Trajectory",
    "integrate",
    "interpolate",
    "jittered_grid",
    "ramped_grid",
    "uniform_grid",
    "PbsrConfig",
    "SensitivityTrajectory",
    "StepJacobians",
    "exp_step",
    "pbs_phi_backward",
    "pbs_phi_forward",
    "pbs_step",
    "refinement_count",
    "run_exp",
    "run_pbs_plain",
    "run_pbsr",
    "switch_to_exp",
    "augment_state",
    "finite_difference_sensitivity",
    "relative_error",
    "run_forward_sensitivity",
    "split_state",
    "Model",
    "check_jacobian_consistency",
    "get_model",
    "list_models",
    "make_chua",
    "make_const_linear",
    "make_random_linear",
    "make_scalar_decay",
    "register_model",
    "StudyReport",
    "compare_study",
    "default_compare_grid",
    "convergence_study",
    "fit_power_law",
    "reference_step",
    "run_method",
    "scaling_study",
]
