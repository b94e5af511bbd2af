"""Exception types shared across the package."""


class MacrohydroError(Exception):
    """Base class for all package errors."""


class DomainError(MacrohydroError):
    """A state vector left the single-phase validity region of the model."""


class SingularHessian(MacrohydroError):
    """Entropy Hessian is numerically singular (condition number too large)."""


class NoConvergence(MacrohydroError):
    """An iterative solver exhausted its iteration budget."""


class DomainEscape(MacrohydroError):
    """Solver iterates could not be kept inside the model domain."""


class StabilityViolation(MacrohydroError):
    """Explicit time step exceeds the diffusive stability bound."""


class NonFiniteState(MacrohydroError):
    """A simulated state became NaN or infinite (blow-up)."""


class NegativeTime(MacrohydroError):
    """Semigroup evaluation requested at t < 0."""


class EigSolverFailure(MacrohydroError):
    """Dense eigenvalue computation did not converge."""


class UnstableGenerator(MacrohydroError):
    """Generator has spectral abscissa >= 0; stationary covariance undefined."""


class ResidualTooLarge(MacrohydroError):
    """Lyapunov solve finished with an unacceptable residual."""


class TailNotConverged(MacrohydroError):
    """Time-integral covariance truncated before the tail bound was met."""


class InsufficientSamples(MacrohydroError):
    """Not enough recorded data for the requested statistic."""


class ConfigError(MacrohydroError):
    """Scenario configuration violates the schema."""
