"""Exception types shared across the package.

Three failure families: bad mathematical inputs (DomainError), bad or
inconsistent configuration (ConfigError), and iterative solver breakdown
(SolverError).  Callers that want a single catch-all can use FkError.
"""


class FkError(Exception):
    """Base class for all package-specific errors."""


class DomainError(FkError, ValueError):
    """A mathematical precondition was violated (point outside domain,
    non-unit direction, nonpositive radius, and so on)."""


class ConfigError(FkError, ValueError):
    """A configuration value is missing, malformed, or out of range."""


class SolverError(FkError, RuntimeError):
    """An iterative linear solver broke down or exhausted its budget."""
