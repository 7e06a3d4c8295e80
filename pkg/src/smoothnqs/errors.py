"""Exception types raised across the package."""


class SnqsError(Exception):
    """Base class for all package errors."""


class DimensionError(SnqsError, ValueError):
    """Array or configuration sizes do not match."""


class CapacityError(SnqsError, ValueError):
    """System too large for a dense (full-basis) computation."""


class DegenerateStateError(SnqsError, ValueError):
    """A state vector has zero or non-finite norm."""


class CollapsedStateError(SnqsError, ArithmeticError):
    """A fidelity term is non-positive or non-finite."""


class NumericError(SnqsError, ArithmeticError):
    """Non-finite parameters or intermediate values."""


class UnsupportedOrderError(SnqsError, ValueError):
    """Requested Taylor order is not implemented."""


class ConfigError(SnqsError, ValueError):
    """Invalid configuration.  ``violations`` lists every problem found."""

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class NonFiniteGradientError(SnqsError, ArithmeticError):
    """The optimizer received a gradient with NaN or inf entries."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class TrainingAborted(SnqsError, RuntimeError):
    """Training stopped on an unrecoverable error; carries the last good coefficients."""

    def __init__(self, message, last_good=None, cause=None):
        super().__init__(message)
        self.last_good = last_good
        self.cause = cause


class CheckpointError(SnqsError, OSError):
    """Missing or malformed checkpoint file."""
