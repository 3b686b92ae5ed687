"""Exception hierarchy.

``DataError`` subclasses signal bad input (exit code 3 on the command
line); ``NumericalError`` subclasses signal a numerical breakdown
(exit code 4 when a whole stage fails).
"""

from __future__ import annotations


class ErgmError(Exception):
    """Base class for all package errors."""


class DataError(ErgmError, ValueError):
    """Invalid or malformed input data."""


class ParseError(DataError):
    """A line of an edge list could not be parsed."""

    def __init__(self, lineno: int, line: str, reason: str):
        self.lineno = lineno
        self.line = line
        super().__init__(f"line {lineno}: {reason}: {line.rstrip()!r}")


class ValidationError(DataError):
    """Arguments violate an operation's preconditions."""


class EmptySummaryError(DataError):
    """No usable fits remain for a summary."""


class DegenerateFamilyError(DataError):
    """Curve family too small for depth computation."""


class NumericalError(ErgmError, ArithmeticError):
    """Generic numerical failure."""


class SingularDesignError(NumericalError):
    """Weighted cross-product of a design matrix is rank deficient."""


class IndefiniteHessianError(NumericalError):
    """Quadratic form is not positive definite."""


class InfeasibleError(NumericalError):
    """Linear inequality system has no solution."""


class DegeneratePredictionError(NumericalError):
    """A predicted probability is exactly 0 or 1."""
