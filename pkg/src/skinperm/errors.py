"""Exception hierarchy shared by all modules."""


class SkinpermError(Exception):
    """Base class for every error raised by the package."""


class DomainError(SkinpermError, ValueError):
    """An argument lies outside the domain of a formula or operation."""


class ConfigError(SkinpermError, ValueError):
    """Invalid configuration, profile or run setup."""


class MeshError(SkinpermError):
    """Mesh generation or validation failed."""


class ParseError(SkinpermError, ValueError):
    """Malformed input file. ``row`` is 1-based and counts the header."""

    def __init__(self, message, row=None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class ValidationError(SkinpermError, ValueError):
    """Well-formed input that violates a data invariant."""


class ResolutionError(SkinpermError):
    """A per-layer parameter could not be resolved."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class AssemblyError(SkinpermError):
    """Matrix assembly failed."""


class SolverError(SkinpermError):
    """Linear or time-stepping solver failure.

    ``history`` holds the relative residual after each multigrid cycle
    when the failure comes from the iterative linear solver.
    """

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history) if history is not None else []
