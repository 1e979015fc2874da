"""Exception types shared across the package."""


class MeterAnomalyError(Exception):
    """Base class for all package errors."""


class InputError(MeterAnomalyError, ValueError):
    """Raised for malformed or out-of-contract input (files, parameters)."""


class InvariantViolation(MeterAnomalyError, RuntimeError):
    """Raised when an internal consistency check fails."""
