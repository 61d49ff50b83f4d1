"""Exception and warning types shared across the package."""


class BinsplitError(Exception):
    """Base class for errors raised by binsplit."""


class ParameterError(BinsplitError, ValueError):
    """Invalid process parameter (p outside its admissible range, bad n, ...)."""


class ResourceLimitError(BinsplitError):
    """Requested exact computation lies above the configured ceiling."""


class ToleranceError(BinsplitError):
    """A requested accuracy cannot be certified with the available data."""


class InsufficientMomentsError(ToleranceError):
    """A series needs more moments than the supplied table holds."""


class NonConvergenceError(BinsplitError):
    """An iterative numerical routine exhausted its budget."""


class PoleError(BinsplitError, ValueError):
    """Evaluation at a pole of a meromorphic function."""


class FormulaMismatchWarning(UserWarning):
    """Two independent evaluations of the same quantity disagree."""


class UnderpoweredWarning(UserWarning):
    """A statistical test was run with fewer trials than recommended."""
