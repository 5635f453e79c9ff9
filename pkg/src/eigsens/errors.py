"""Exception taxonomy shared across the package.

The CLI maps these onto process exit codes: configuration problems exit
with 2, invariant violations with 3, solver non-convergence with 4.
"""


class EigsensError(Exception):
    """Base class for all package errors."""


class ConfigError(EigsensError):
    """Malformed or inconsistent configuration (file, key, or value)."""


class DomainError(EigsensError, ValueError):
    """An argument violates an operation's precondition."""


class SizeBudgetError(DomainError):
    """An exact-enumeration request exceeds its hard evaluation budget."""


class InvariantViolation(EigsensError):
    """A mathematical invariant that must hold exactly failed."""


class DegenerateGapError(EigsensError):
    """Top spectral gap is below the degeneracy threshold; the top
    eigenvector statistic is ill-defined for this instance."""


class ConvergenceError(EigsensError):
    """Iterative solver failed to reach tolerance within its cap."""

    def __init__(self, message: str, best_residual: float):
        super().__init__(message)
        self.best_residual = best_residual
