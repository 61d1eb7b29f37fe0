"""Exception hierarchy shared by every kpent module."""


class KpentError(Exception):
    """Base class for all kpent errors."""


class DomainError(KpentError, ValueError):
    """An argument lies outside the domain of the operation."""


class PreconditionError(KpentError, ValueError):
    """An input violates a documented precondition (e.g. unnormalized grid)."""


class IncompatibleGridError(KpentError, ValueError):
    """Two grids cannot be combined (spacing or dimension mismatch)."""


class EmptySupportError(KpentError, ValueError):
    """No probability mass landed inside the grid."""


class CoverageError(KpentError, ValueError):
    """A pushforward target grid does not cover the image of the source."""


class EstimationError(KpentError, RuntimeError):
    """A sampling estimator had nothing to work with."""


class NumericError(KpentError, RuntimeError):
    """An iterative numerical routine failed to converge."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class DegenerateError(KpentError, ValueError):
    """A covariance (or matrix) is singular where a nonsingular one is required."""


class ConfigError(KpentError, ValueError):
    """A harness configuration is malformed or names an unknown entry."""


class HypothesisError(ConfigError):
    """Inputs fall outside the hypothesis class of the requested theorem."""

    def __init__(self, theorem_id, hypothesis):
        super().__init__(f"{theorem_id}: hypothesis violated: {hypothesis}")
        self.theorem_id = theorem_id
        self.hypothesis = hypothesis
