"""Exception hierarchy shared by every module of the package."""


class CaemError(Exception):
    """Base class for all errors raised by this package."""


class ShapeMismatch(CaemError, ValueError):
    pass


class NonFiniteError(CaemError, FloatingPointError):
    """A NaN or Inf was produced. ``term`` names the loss term when known."""

    def __init__(self, message, term=None):
        super().__init__(message)
        self.term = term


class NotScalar(CaemError, ValueError):
    pass


class DetachedRoot(CaemError, ValueError):
    pass


class DimensionMismatch(ShapeMismatch):
    pass


class TooFewSamples(CaemError, ValueError):
    pass


class TooFewSteps(CaemError, ValueError):
    pass


class StateMismatch(CaemError, ValueError):
    pass


class EmptyDataset(CaemError, ValueError):
    pass


class EmptyInput(CaemError, ValueError):
    pass


class LengthMismatch(CaemError, ValueError):
    pass


class SingleClassTruth(CaemError, ValueError):
    pass


class DataError(CaemError, ValueError):
    """Base for ingestion problems."""


class MissingColumn(DataError):
    pass


class NonNumericCell(DataError):
    def __init__(self, row, column, value):
        super().__init__(f"non-numeric cell {value!r} in column {column!r} at row {row}")
        self.row = row
        self.column = column


class EmptyFile(DataError):
    pass


class IndivisibleWindow(DataError):
    pass


class FrameTooShort(DataError):
    pass


class RatioOutOfRange(CaemError, ValueError):
    pass


class BadSpec(CaemError, ValueError):
    pass


class SignalCountMismatch(CaemError, ValueError):
    pass


class UnknownVariant(CaemError, ValueError):
    pass


class ConfigError(CaemError, ValueError):
    pass


class FormatError(CaemError, ValueError):
    """A serialized container has a bad magic, version or layout."""
