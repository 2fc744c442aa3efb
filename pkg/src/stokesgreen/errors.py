"""Exception hierarchy shared by all stokesgreen modules."""


class StokesGreenError(Exception):
    """Base class for all library errors."""


class GeometryError(StokesGreenError):
    """Invalid or degenerate domain geometry."""


class DomainError(StokesGreenError):
    """A query point lies outside the domain."""


class ResolutionError(StokesGreenError):
    """A requested length scale is not resolvable on the grid."""


class ValidationError(StokesGreenError):
    """A coefficient field violates its declared ellipticity."""


class CompatibilityError(StokesGreenError):
    """Right-hand side data violates a solvability condition."""


class SolverError(StokesGreenError):
    """Iterative solver failed to reach the requested tolerance.

    Carries the best residual achieved so callers can report it.
    """

    def __init__(self, message, best_residual=None, iterations=None):
        super().__init__(message)
        self.best_residual = best_residual
        self.iterations = iterations


class SeparationError(StokesGreenError):
    """Two poles are too close for a cross-pole identity check."""


class ParameterError(StokesGreenError):
    """An estimate parameter lies outside its admissible range."""


class DataError(StokesGreenError):
    """Measurement data unusable for the requested fit."""


class ConfigError(StokesGreenError):
    """Experiment configuration failed validation."""
