"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid run configuration; maps to CLI exit code 2."""


class NumericalAbort(RuntimeError):
    """Non-finite state encountered while sampling; maps to CLI exit code 3."""
