"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: configuration problems -> 2,
numerical failures -> 3, data-format problems -> 4.
"""


class IonPhotonError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(IonPhotonError):
    """Invalid configuration value, schema violation, or bad override."""


class InvalidTransitionError(ConfigError):
    """Level pair is not dipole-allowed for the requested coupling."""


class NumericError(IonPhotonError):
    """Base class for numerical failures."""


class AmbiguousSteadyStateError(NumericError):
    """Liouvillian null space has dimension > 1; no unique steady state."""

    def __init__(self, dimension, message=None):
        self.dimension = dimension
        super().__init__(message or f"degenerate steady state: null space dimension {dimension}")


class IntegrationFailureError(NumericError):
    """Time integration did not converge; carries solver diagnostics."""

    def __init__(self, message, diagnostics=None):
        self.diagnostics = diagnostics or {}
        super().__init__(message)


class NumericDomainError(NumericError):
    """Result left its mathematically valid domain (invalid parameter region)."""


class QuadratureError(NumericError):
    """Numerical integration failed to reach the requested tolerance."""

    def __init__(self, message, achieved=None):
        self.achieved = achieved
        super().__init__(message)


class OutOfRangeError(NumericError):
    """Requested point lies outside the attainable range of a curve."""

    def __init__(self, message, span=None):
        self.span = span
        super().__init__(message)


class DataFormatError(IonPhotonError):
    """Malformed input data (bad magic, version, CSV layout...)."""


class TagIntegrityError(DataFormatError):
    """Structurally valid tag file with inconsistent content."""

    def __init__(self, message, offset=None):
        self.offset = offset
        super().__init__(message)
