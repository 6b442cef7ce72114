"""Exception hierarchy shared across the package."""


class PerturbRLError(Exception):
    """Base class for all package-specific errors."""


class DomainError(PerturbRLError, ValueError):
    """A numeric argument is outside the physically meaningful domain."""


class ConfigError(PerturbRLError, ValueError):
    """An experiment or disturbance configuration violates an invariant."""


class UsageError(PerturbRLError, RuntimeError):
    """An API was called out of protocol (e.g. step after done)."""
