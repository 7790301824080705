"""Exception hierarchy shared by every module."""


class Thermo1dError(Exception):
    """Base class for all errors raised by thermo1d."""


class DomainError(Thermo1dError, ValueError):
    """An argument lies outside the domain of the operation."""


class PreconditionError(DomainError):
    """A documented precondition of an operation does not hold."""


class SingularityError(DomainError):
    """A potential or derivative was evaluated at a singular point."""


class DivergenceError(DomainError):
    """A series that must converge does not."""


class UnsupportedError(DomainError):
    """The operation is not available for this kind of input."""


class InfeasibleError(DomainError):
    """No solution exists in the admissible search window."""


class ConstructionError(DomainError):
    """An object could not be constructed from the given data."""


class BudgetError(Thermo1dError):
    """A node or component budget was exceeded.

    ``deepest_level`` is the last level that was completed in full.
    """

    def __init__(self, message, deepest_level):
        super().__init__(message)
        self.deepest_level = deepest_level


class ConvergenceError(Thermo1dError):
    """An iterative solver failed to converge."""

    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


class ConfigError(DomainError):
    """Validation of an experiment configuration failed.

    All problems found are collected in ``errors``.
    """

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))
