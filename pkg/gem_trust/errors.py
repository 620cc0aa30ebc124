"""Base exceptions shared across the GEM modules."""


class GemError(Exception):
    """Base exception for every error raised by gem_trust."""
    pass


class ConfigurationError(GemError):
    """Invalid configuration value, unknown destination or out-of-range parameter."""
    pass


class InvariantViolation(GemError):
    """A protocol invariant did not hold during a run."""
    pass
