"""Exception types shared across the lab. The CLI maps them onto exit codes."""


class TabhashError(Exception):
    exit_code = 1


class ConfigError(TabhashError, ValueError):
    """Invalid parameters (key spec, widths, experiment config)."""

    exit_code = 2


class DomainError(TabhashError, ValueError):
    """A value outside the domain of the operation, e.g. a character >= |Sigma|."""

    exit_code = 2


class InputError(TabhashError, ValueError):
    exit_code = 2


class ResourceError(TabhashError, RuntimeError):
    """An enumeration or search budget was exceeded.

    ``partial`` carries whatever verdict was established before giving up.
    """

    exit_code = 3

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class InvariantViolation(TabhashError, AssertionError):
    exit_code = 1
