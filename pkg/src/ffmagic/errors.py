"""Exception types shared across the package."""


class FfmagicError(Exception):
    """Base class for all package-specific failures."""


class ConditioningError(FfmagicError):
    """A matrix operation failed because the operands are numerically singular."""


class DegenerateTrajectoryError(FfmagicError):
    """A trajectory state collapsed below numerical rank (mode norm underflow)."""


class ConfigError(FfmagicError):
    """A run configuration is malformed or inconsistent.  CLI exit code 2."""


class SchemaError(FfmagicError):
    """An input table does not match the expected column schema.  CLI exit code 3."""
