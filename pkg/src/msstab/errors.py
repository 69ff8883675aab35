"""Exception hierarchy shared by all modules."""


class MSStabError(Exception):
    """Base class for library errors."""


class ContractViolation(MSStabError, ValueError):
    """Inputs violate a documented precondition (shapes, signs, ranges)."""


class DomainError(ContractViolation):
    """Argument lies outside the domain of a closed-form expression."""


class InvariantViolation(MSStabError):
    """A computed object fails one of its structural invariants."""


class DenseCapExceeded(MSStabError):
    """Dense materialization was refused; use the matrix-free solver instead."""


class UnsupportedConfiguration(MSStabError):
    """The requested scheme/operator combination is not available."""


class BudgetExceeded(MSStabError):
    """A Monte Carlo run would exceed the configured work budget."""

    def __init__(self, message, estimated_cost=None):
        super().__init__(message)
        self.estimated_cost = estimated_cost


class AccuracyError(MSStabError):
    """A quadrature or iterative routine failed to reach its target accuracy."""


class ConfigError(MSStabError):
    """Invalid experiment configuration; ``path`` names the offending field."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path
