"""Exception types shared across the workbench.

Exit-code mapping for the CLI: usage errors exit 2 (click's default),
FormatError/DataError/ShapeError exit 3, NumericError exits 4.
"""


class FoolbenchError(Exception):
    """Base class for all workbench errors."""

    exit_code = 3


class FormatError(FoolbenchError):
    """A file does not conform to its declared format (bad magic, truncation)."""


class DataError(FoolbenchError):
    """Structurally valid input with inconsistent content (label out of range, ...)."""


class ShapeError(DataError):
    """Array dimensions do not match what an operation requires."""


class NumericError(FoolbenchError):
    """A computation produced non-finite values and was aborted."""

    exit_code = 4

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace
