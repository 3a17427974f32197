"""Exception types shared across the package."""


class HandoverError(Exception):
    """Base class for all package errors."""


class ConfigError(HandoverError, ValueError):
    """Invalid or unknown configuration value."""


class NumericError(HandoverError, FloatingPointError):
    """A computation produced a non-finite value."""


class InfeasibleError(HandoverError, ValueError):
    """Requested synthetic layout cannot be realised."""
