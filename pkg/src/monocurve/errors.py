"""Exception types shared across the package."""


class MonocurveError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(MonocurveError):
    pass


class EmptyBox(MonocurveError):
    pass


class NoConvergence(MonocurveError):
    pass


class NotStrictlyIncreasing(MonocurveError):
    pass


class DegenerateColumn(MonocurveError):
    pass


class NonFinite(MonocurveError):
    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class CovarianceNotPSD(MonocurveError):
    pass


class OutOfRange(MonocurveError):
    pass


class ParseError(MonocurveError):
    def __init__(self, message, row=None, col=None):
        super().__init__(message)
        self.row = row
        self.col = col


class RaggedRows(ParseError):
    pass


class EmptySet(MonocurveError):
    pass


class SizeMismatch(MonocurveError):
    pass


class TooFew(MonocurveError):
    pass


class TapeMismatch(MonocurveError):
    pass
