"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Array dimensions do not match what an operation requires."""


class EmptyInputError(ValueError):
    """An operation received zero samples."""


class IdxFormatError(ValueError):
    """Malformed IDX payload. Carries the byte offset of the defect."""

    def __init__(self, offset: int, message: str):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class DegenerateClassError(ValueError):
    """A class has zero or all samples, so a one-vs-all split is impossible."""


class UndefinedMetricError(ValueError):
    """The metric is undefined for this input (e.g. single-class ranking)."""


class NumericError(ArithmeticError):
    """Non-finite values showed up where finite ones are required."""


class StaleCacheError(RuntimeError):
    """A backward pass got an activation cache that does not match its batch."""


class ConfigError(ValueError):
    """Invalid experiment configuration. The message names the offending field."""
