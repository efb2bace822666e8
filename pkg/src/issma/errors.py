"""Exception types raised across the package."""


class IssmaError(Exception):
    """Base class for all package errors."""


class RankDeficient(IssmaError):
    """Channel matrix is numerically rank deficient."""


class NotPositiveDefinite(IssmaError):
    """Matrix expected to be hermitian positive definite is not."""


class ShapeError(IssmaError, ValueError):
    """Array dimensions are inconsistent with the operation."""


class ModelError(IssmaError, ValueError):
    """Invalid channel model (e.g. correlation matrix not PSD)."""


class ParamError(IssmaError, ValueError):
    """Invalid scalar parameter."""


class TooLarge(IssmaError):
    """Exhaustive enumeration would exceed the configured guard."""


class ConfigError(IssmaError, ValueError):
    """Invalid experiment configuration.

    ``field`` is the dotted path of the offending entry.
    """

    def __init__(self, field, message):
        self.field = field
        self.message = message
        super().__init__(f"{field}: {message}")
