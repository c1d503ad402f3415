"""Exception hierarchy shared by every module."""


class RandpressError(Exception):
    """Base class for all library errors."""


class InvalidArgument(RandpressError, ValueError):
    pass


class InsufficientTrajectory(RandpressError, ValueError):
    """The base trajectory is too short for the requested orbit length."""


class InsufficientWord(RandpressError, ValueError):
    pass


class EnumerationLimit(RandpressError, RuntimeError):
    """Exact cylinder enumeration would exceed the configured row budget."""


class EstimationFailed(RandpressError, RuntimeError):
    pass


class BracketFailure(RandpressError, RuntimeError):
    """No sign change of the pressure curve was found while expanding the bracket."""


class ScanInconclusive(RandpressError, RuntimeError):
    pass


class ConfigError(RandpressError, ValueError):
    """Configuration could not be parsed or failed validation.

    ``errors`` lists every problem found, not only the first one.
    """

    def __init__(self, message, errors=None, kind="validation"):
        super().__init__(message)
        self.errors = list(errors or [message])
        self.kind = kind
