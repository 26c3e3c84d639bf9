"""Exception types shared across the package."""


class FlowcastError(Exception):
    """Base class for all flowcast errors."""


class InvalidInputError(FlowcastError):
    """An argument violates a documented precondition."""


class InvalidSpecError(FlowcastError):
    """A model specification is internally inconsistent."""


class UnsupportedSizeError(FlowcastError):
    """A dense desk-scale guard was exceeded."""


class NotPositiveDefiniteError(FlowcastError):
    """Factorization hit a non-positive pivot.

    ``pivot_index`` is the offending index in the original (unpermuted)
    ordering, or None when the backend could not localize it.
    """

    def __init__(self, message: str, pivot_index: int | None = None):
        super().__init__(message)
        self.pivot_index = pivot_index


class NoInteriorModeError(FlowcastError):
    """The requested density has no mode in the interior of its support."""


class NotAMaximumError(FlowcastError):
    """Stationary point found, but the curvature there is not negative."""


class NoConvergenceError(FlowcastError):
    """Iteration cap reached.

    Carries whatever progress information the caller may want: ``best``
    (best point found so far) and/or ``gradient_norm`` (last gradient norm).
    """

    def __init__(self, message: str, best=None, gradient_norm: float | None = None):
        super().__init__(message)
        self.best = best
        self.gradient_norm = gradient_norm


class DegenerateProblemError(FlowcastError):
    """The inference problem has no usable observations."""


class ParseError(FlowcastError):
    """A text input could not be parsed. Carries the 1-based line number."""

    def __init__(self, message: str, line_number: int | None = None):
        super().__init__(message)
        self.line_number = line_number


class DuplicateRowError(FlowcastError):
    """The same logical record appeared twice in an input stream."""


class EmptyMetricError(FlowcastError):
    """A metric was requested over an empty set of usable pairs."""
