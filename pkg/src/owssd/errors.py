"""Error hierarchy shared by every module in the package.

Each category maps to one CLI exit code, so callers can tell apart
bad arguments, malformed files, and numerical failures without
parsing messages.
"""

from __future__ import annotations


class OwssdError(Exception):
    """Base class for all errors raised by this package."""


class InputError(OwssdError, ValueError):
    """A caller-supplied value violates a documented precondition."""


class InvalidBoxError(InputError):
    """Box coordinates are degenerate, negative, or non-finite."""


class DimensionError(InputError):
    """A feature vector's length disagrees with the expected dimension."""


class SchemaError(OwssdError):
    """A file does not conform to its declared record schema.

    Carries enough location detail to point at the offending line.
    """

    def __init__(self, message: str, *, path: str | None = None, line: int | None = None):
        loc = ""
        if path is not None:
            loc = f"{path}"
            if line is not None:
                loc += f":{line}"
            loc = f" [{loc}]"
        super().__init__(f"{message}{loc}")
        self.path = path
        self.line = line


class TrainingError(OwssdError):
    """Optimization produced a non-finite loss or could not proceed."""

    def __init__(self, message: str, *, epoch: int | None = None, batch: int | None = None):
        where = ""
        if epoch is not None:
            where = f" (epoch {epoch}" + (f", batch {batch})" if batch is not None else ")")
        super().__init__(f"{message}{where}")
        self.epoch = epoch
        self.batch = batch


class CalibrationError(OwssdError):
    """Threshold calibration is impossible with the data provided."""
