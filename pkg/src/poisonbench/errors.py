"""Exception types shared across the package."""


class PoisonbenchError(Exception):
    """Base class for all poisonbench errors."""


class ConfigurationError(PoisonbenchError):
    """A config value violates its documented constraints."""


class UsageError(PoisonbenchError):
    """An operation was called in a way its contract forbids."""


class ShapeError(PoisonbenchError):
    """Array dimensions do not match what the operation expects."""


class FormatError(PoisonbenchError):
    """A serialized file is malformed or truncated."""
