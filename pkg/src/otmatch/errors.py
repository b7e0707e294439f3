"""Exception types shared across the package."""


class OtmatchError(Exception):
    """Base class for package errors."""


class DimensionError(OtmatchError, ValueError):
    """Array shapes are inconsistent with what an operation requires."""


class DomainError(OtmatchError, ValueError):
    """A point lies outside the sieve domain (beyond the clamp tolerance)."""


class DataError(OtmatchError, ValueError):
    """Malformed input data (bad CSV cell, missing column, NaN)."""


class NumericalError(OtmatchError, RuntimeError):
    """A numerical procedure failed (non-convergence, singularity, infeasibility)."""
