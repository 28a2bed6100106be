"""Exception types shared across the package."""
from __future__ import annotations


class EchoscopeError(Exception):
    """Base class for all echoscope errors."""


class InputFormatError(EchoscopeError):
    """A data file could not be read or violates its format contract."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class InfeasibleConfigError(EchoscopeError):
    """A synthetic-dataset configuration cannot be realized."""


class UndefinedStatisticError(EchoscopeError):
    """A statistic's preconditions are not met (e.g. zero variance)."""
