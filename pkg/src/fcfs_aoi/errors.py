"""Exception hierarchy shared by every module."""


class AoiError(Exception):
    """Base class for all errors raised by this package."""


class InfiniteMoment(AoiError, ValueError):
    """A required moment of the service time does not exist."""


class Unstable(AoiError, ValueError):
    """Total load is not below one."""


class QuadratureFailure(AoiError, ArithmeticError):
    """Adaptive integration did not reach the requested tolerance."""


class TruncationFailure(AoiError, ArithmeticError):
    """A truncated series could not be made accurate enough."""


class NotExponential(AoiError, TypeError):
    """An M/M/1-only formula was handed a non-exponential service law."""


class NoDeliveries(AoiError, RuntimeError):
    """A source received no packets inside the measurement window."""


class ConfigError(AoiError, ValueError):
    """A configuration file or mapping is malformed."""


class GridMismatch(AoiError, ValueError):
    """Two result tables do not cover the same parameter grid."""
