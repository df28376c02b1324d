"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Input data or configuration violates a documented precondition."""


class DegenerateLengthscaleError(ValidationError):
    """A median-heuristic lengthscale came out as zero."""


class NumericalError(ArithmeticError):
    """A linear-algebra step failed (factorization, degenerate smoother, ...)."""


class TuningError(NumericalError):
    """Every candidate in a tuning grid was degenerate."""
