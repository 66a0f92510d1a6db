"""Exception hierarchy shared across the package."""


class PrecisError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(PrecisError):
    """Malformed input file. Carries the 1-based row number when known."""

    def __init__(self, message: str, row: int | None = None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class EmptyPanelError(PrecisError):
    """No rows survive parsing / date filtering."""


class UnfillableLeadingGapError(PrecisError):
    """A column starts with a missing value, so forward fill has no source."""

    def __init__(self, column: str):
        self.column = column
        super().__init__(f"column {column!r} has a leading missing value; forward fill is undefined")


class DegenerateColumnError(PrecisError):
    """A column has zero variance (or is otherwise unusable)."""


class SymmetryError(PrecisError):
    """Matrix is not symmetric within tolerance."""


class InsufficientDataError(PrecisError):
    """Fewer observations than the operation requires."""


class NotPSDError(PrecisError):
    """Matrix has a significantly negative eigenvalue."""


class SingularMatrixError(PrecisError):
    """Matrix is singular (smallest eigenvalue at or below the cutoff)."""


class DegenerateMatrixError(PrecisError):
    """Matrix is degenerate for the requested operation (e.g. zero diagonal)."""


class MulticollinearityError(PrecisError):
    """Regression design is rank deficient."""

    def __init__(self, message: str, dependent_columns: list[int] | None = None):
        self.dependent_columns = dependent_columns or []
        super().__init__(message)


class NonconvergenceError(PrecisError):
    """Iteration budget exhausted. ``best`` holds the last iterate when available."""

    def __init__(self, message: str, best=None):
        self.best = best
        super().__init__(message)


class TuningError(PrecisError):
    """Every grid point of a penalty search failed. ``curve`` holds the
    (rho, score) pairs that were evaluated, when any exist."""

    def __init__(self, message: str, curve=None):
        self.curve = curve or []
        super().__init__(message)


class UndefinedMetricError(PrecisError):
    """Metric is undefined for the given inputs (e.g. zero variance)."""


class ConfigError(PrecisError):
    """Invalid run configuration."""
