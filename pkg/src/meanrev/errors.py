"""Exception hierarchy shared by every stage of the pipeline."""

from __future__ import annotations


class MeanRevError(Exception):
    """Base class for all package errors."""


class ParameterDomainError(MeanRevError, ValueError):
    """A model or grid parameter lies outside its admissible domain."""


class InsufficientDataError(MeanRevError, ValueError):
    """Too few observations for the requested operation."""


class ValidationError(MeanRevError, ValueError):
    """Input data violates a structural invariant (ordering, positivity, ...)."""


class ParseError(ValidationError):
    """A malformed row in a CSV input.

    Parameters
    ----------
    message : str
        What went wrong.
    line : int
        1-based line number in the source file.
    """

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class AlignmentError(ValidationError):
    """Two series that must share an index do not."""


class SingularityError(ParameterDomainError):
    """A closed-form expression is evaluated at one of its poles."""


class FilterError(MeanRevError, RuntimeError):
    """The Kalman recursion hit a singular residual covariance."""


class EstimationError(MeanRevError, RuntimeError):
    """A numerical estimator failed to converge.

    Attributes
    ----------
    best : object
        Best iterate reached before giving up (type depends on the estimator).
    residuals : object, optional
        Final residual vector for root-finding estimators.
    """

    def __init__(self, message: str, best=None, residuals=None):
        super().__init__(message)
        self.best = best
        self.residuals = residuals


class SingularJacobianError(EstimationError):
    """Root finding stalled on a rank-deficient Jacobian."""
