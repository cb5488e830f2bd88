"""Exception taxonomy shared across the toolkit.

The CLI maps these onto exit codes: configuration problems exit 3, solver
failures exit 1, verification failures exit 2.
"""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigurationError(ValueError):
    """A mesh/solver/problem configuration is invalid or infeasible."""


class UnsupportedProblemError(ConfigurationError):
    """The problem structure is valid but outside what this solver handles."""


class SolverError(RuntimeError):
    """A solver failed to produce a usable result (divergence, NaNs, ...)."""


class SimulationError(SolverError):
    """Path simulation produced non-finite states."""


class VerificationError(RuntimeError):
    """An equilibrium verification check failed."""
