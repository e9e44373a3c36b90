"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Bad argument or malformed input data."""


class DimensionError(ValidationError):
    """Shape or size mismatch."""


class ParseError(ValueError):
    """Unparseable instance file; message carries file and line context."""


class TrivialInstanceError(ValidationError):
    """The cost matrix is identically zero, so every feasible point is optimal."""


class NumericalError(RuntimeError):
    """An iterative numerical routine failed to produce a usable result."""
