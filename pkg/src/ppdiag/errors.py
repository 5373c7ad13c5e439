"""Exception hierarchy.

The CLI maps :class:`ValidationError` to exit code 1 and
:class:`NumericError` to exit code 2.
"""


class PPDiagError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(PPDiagError, ValueError):
    """Input violates a documented invariant."""


class OutOfRangeError(ValidationError):
    """A time argument lies outside the observation window."""


class UsageError(ValidationError):
    """Arguments are individually valid but inconsistent with each other."""


class UnderIdentifiedError(ValidationError):
    """Too few events to estimate the requested model."""


class CompatibilityError(ValidationError):
    """Two inputs (e.g. model file and events file) do not belong together."""


class NumericError(PPDiagError, ArithmeticError):
    """A computation produced a non-finite or otherwise unusable value."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class ZeroIntensityError(NumericError):
    """The fitted intensity vanishes at an observed event."""


class ConvergenceError(NumericError):
    """No optimizer start converged."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or []


class ExplosionError(NumericError):
    """A simulation exceeded the event budget (supercritical regime)."""
