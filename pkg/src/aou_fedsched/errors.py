"""Exception types shared across the package."""


class ConfigError(ValueError):
    """An experiment or module configuration value is invalid."""


class FormatError(ValueError):
    """A binary or text input file does not match its expected format."""


class InvariantViolation(RuntimeError):
    """A per-round simulation invariant failed (disjointness, rate, budget, age coherence)."""
