class QDTomoError(Exception):
    """Base class for all package errors."""


class ValidationError(QDTomoError, ValueError):
    pass


class DimensionMismatch(ValidationError):
    pass


class InfeasibleInput(ValidationError):
    pass


class TruncationInsufficient(QDTomoError):
    pass


class QuadratureFailure(QDTomoError):
    pass


class NotConverged(QDTomoError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ZeroElement(ValidationError):
    pass


class DimensionCap(ValidationError):
    pass


class InconsistentData(ValidationError):
    pass
