class EwiError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(EwiError):
    """Malformed or inconsistent run configuration."""


class MissingDataError(EwiError):
    """A referenced input file or directory does not exist."""


class DataError(EwiError, ValueError):
    """Input data violates a documented invariant."""
