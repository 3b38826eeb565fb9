"""Exception hierarchy shared across the toolkit."""


class MetashieldError(Exception):
    """Base class for every toolkit error."""


class ArgumentError(MetashieldError, ValueError):
    """An argument is outside the documented domain."""


class InfeasibleDesignError(MetashieldError, ValueError):
    """A requested design cannot be realized with the given geometry."""


class CalibrationError(MetashieldError):
    """Calibration search found no point satisfying every target.

    Attributes
    ----------
    residuals : dict
        Target name to signed residual for the best candidate found.
        Positive values mean the target was missed by that amount.
    """

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = dict(residuals or {})


class FitError(MetashieldError):
    """Channel fit could not reach the requested composite peak."""


class GeometryError(MetashieldError, ValueError):
    """Solid geometry is self-intersecting or does not fit its enclosure."""


class InputError(MetashieldError, ValueError):
    """A file or record supplied by the user is malformed."""


class ConfigError(InputError):
    """Configuration file is unreadable or contains unknown keys."""
