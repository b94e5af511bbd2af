"""Numerical laboratory for reservoir-driven nonlinear diffusions.

Steady profiles, the linearized relaxation semigroup, the static covariance
of Gaussian fluctuations around the steady state (with its local/long-range
split, reciprocity and long-range criteria), and an Euler-Maruyama ensemble
simulator for the fluctuation process with a statistical test battery.
"""

from .errors import (
    ConfigError,
    DomainError,
    DomainEscape,
    EigSolverFailure,
    InsufficientSamples,
    MacrohydroError,
    NegativeTime,
    NoConvergence,
    NonFiniteState,
    ResidualTooLarge,
    SingularHessian,
    StabilityViolation,
    TailNotConverged,
    UnstableGenerator,
)
from .grid import BoundaryData, Mesh1D
from .thermo import (
    Box,
    ThermoModel,
    J_of_q,
    K_of_q,
    casimir_defect,
    gaussian,
    make_model,
    q_of_theta,
    sep,
    theta_of_q,
    twocomp,
    with_antisymmetric_mobility,
)
from .steady import (
    SteadyProfile,
    evolve,
    solve_steady,
    solve_steady_theta_form,
    stability_limit,
    steady_current,
)
from .linop import LinearizedSystem, assemble, semigroup_apply, spectral_check
from .covariance import (
    CovarianceReport,
    NoiseCovariance,
    compute_report,
    fd_residual,
    integral_covariance,
    kron_lyapunov_solve,
    longrange_criterion,
    lyapunov_solve,
    noise_covariance,
    onsager_check,
    split_local_longrange,
)
from .spde import (
    Ensemble,
    SimConfig,
    autocorrelation,
    discrete_stationary_covariance,
    ensemble_mean_check,
    gaussian_markov_tests,
    increment_tests,
    simulate,
    stationary_covariance,
)

__version__ = "0.1.0"
