"""Exception hierarchy.

Everything raised because of bad input data derives from :class:`DataError`
so the command line can map it to a single exit code.
"""


class GoProbeError(Exception):
    """Base class for all errors raised by this package."""


class DataError(GoProbeError):
    """Input data is malformed or inconsistent."""


class ConfigError(GoProbeError):
    """Invalid configuration or arguments."""
