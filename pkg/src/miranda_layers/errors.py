"""Exception hierarchy shared by all modules."""


class MirandaError(Exception):
    pass


class DomainError(MirandaError, ValueError):
    """An argument lies outside the domain of an operation."""


class GeometryError(MirandaError):
    """Degenerate or invalid boundary geometry."""


class SingularityError(DomainError):
    """Evaluation requested at a singular point (kernel at 0, potential on the boundary)."""


class ConstructionError(MirandaError):
    """A certified object (tubular field, coordinate cylinder) could not be built."""


class ConfigError(MirandaError, ValueError):
    """Malformed experiment, boundary, kernel or density configuration."""


class QuadratureConvergenceError(MirandaError):
    """Refinement cap reached before the requested tolerance.

    ``best`` carries the last estimate so callers can still inspect it.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best
