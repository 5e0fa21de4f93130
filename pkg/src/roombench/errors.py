"""Exception types shared across the package."""

from __future__ import annotations


class RoomBenchError(Exception):
    """Base class for all package errors."""


class ProgramParseError(RoomBenchError):
    """Raised when constraint program text cannot be parsed.

    Carries the 1-based line/column of the offending token.
    """

    def __init__(self, message: str, line: int, column: int, token: str = ""):
        self.line = line
        self.column = column
        self.token = token
        super().__init__(f"line {line}, col {column}: {message}")


class SceneFormatError(RoomBenchError):
    """Raised when a scene/trajectory/report file does not match its schema."""


class LayoutActionError(RoomBenchError):
    """Raised for malformed optimizer actions (unknown target, bad payload)."""


class CyclicRelationError(RoomBenchError):
    """Raised when instance relations form a cycle."""


class PathNotFoundError(RoomBenchError):
    """Raised when no grid path exists between two accessible cells."""


class InaccessibleCellError(RoomBenchError):
    """Raised when a path endpoint (or the door cell) is not accessible."""


class RenderError(RoomBenchError):
    """Raised for degenerate camera intrinsics or render setup."""


class ScoringError(RoomBenchError):
    """Raised when a prediction's answer type does not match its task."""


class RefinerError(RoomBenchError):
    """Raised for misconfigured external refiner endpoints."""


class ConfigError(RoomBenchError):
    """Raised for unknown or malformed run-config keys and values."""
