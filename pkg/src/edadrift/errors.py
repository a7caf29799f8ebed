"""Exception types raised across the package."""


class InvalidSpecError(ValueError):
    """Algorithm, process or stopping-rule parameters violate their invariants."""


class DomainError(ValueError):
    """A numeric argument lies outside the domain of a formula."""


class InfeasibleSizeError(ValueError):
    """Exact enumeration would be too large; use the Monte Carlo path instead."""


class InsufficientDataError(ValueError):
    pass


class SingularSystemError(RuntimeError):
    """The hitting-time linear system is singular (target set unreachable)."""


class ExperimentFailed(RuntimeError):
    """Every replica of an experiment exhausted its iteration budget."""
