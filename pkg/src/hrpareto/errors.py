"""Exception hierarchy.

Input problems derive from :class:`ValidationError` (also a ``ValueError``);
failures of the numerical machinery derive from :class:`NumericalError`.
The CLI maps the first family to exit status 1 and the second to 2.
"""


class HrParetoError(Exception):
    """Base class for all package errors."""


class ValidationError(HrParetoError, ValueError):
    pass


class NumericalError(HrParetoError, ArithmeticError):
    pass


# parameter validation
class NotSymmetric(ValidationError):
    pass


class KernelViolation(ValidationError):
    pass


class NonPositiveOnComplement(ValidationError):
    pass


class ExponentNonPositive(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class NonPositiveComponent(ValidationError):
    pass


class NonPositiveBeta(ValidationError):
    pass


class OutOfRange(ValidationError):
    pass


class OutOfSupport(ValidationError):
    pass


class ConstraintViolation(ValidationError):
    pass


class MomentDoesNotExist(ValidationError):
    pass


# data validation
class RowInsideThreshold(ValidationError):
    pass


class EmptySample(ValidationError):
    pass


class MarginNotExceeded(ValidationError):
    pass


class BadConfig(ValidationError):
    pass


class FileError(ValidationError):
    pass


# numerical failures
class CovNotPD(NumericalError):
    pass


class BudgetExceeded(NumericalError):
    pass


class NoMle(NumericalError):
    pass


class NotConverged(NumericalError):
    """Optimizer budget exhausted; ``report`` holds the best iterate."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
