"""Shared exception types."""


class UnsupportedSetError(ValueError):
    """Raised when an operation has no implementation for the given set kind."""


class BudgetExceededError(RuntimeError):
    """Raised when an exhaustive solve would exceed its configured budget."""


class InsufficientDataError(ValueError):
    """Raised when a statistical routine has too few usable points."""


class ConfigError(ValueError):
    """Raised on malformed config or results files; message carries field/line context."""
