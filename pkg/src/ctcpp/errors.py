"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """A parameter set violates a documented bound or shape requirement."""


class DomainError(ValueError):
    """An argument lies outside the region where the operation is defined."""


class StateError(RuntimeError):
    """An operation was requested on an object in the wrong lifecycle state."""
