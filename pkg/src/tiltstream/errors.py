"""Exception types shared across the package.

The CLI maps these onto exit codes: invalid arguments / bad configuration
exit with 2, unreadable or malformed files with 3, degenerate data with 4.
"""


class TiltStreamError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgumentError(TiltStreamError, ValueError):
    """An argument violates a documented precondition."""


class ConfigError(InvalidArgumentError):
    """A configuration file or option set is invalid."""


class ParseError(TiltStreamError, ValueError):
    """A stored artifact is malformed; the message names the offending field."""


class DegenerateDataError(TiltStreamError, ValueError):
    """Input data is degenerate for the requested operation (e.g. constant)."""


class UndefinedSNRError(DegenerateDataError):
    """Signal-to-noise is undefined because the mean intensity is not positive."""
