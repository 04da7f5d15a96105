from __future__ import annotations


class SubtypeError(Exception):
    """Base exception for pipeline errors."""
    exit_code = 4


class ConfigError(SubtypeError):
    """Bad flags, config documents or missing inputs."""
    exit_code = 2


class DataError(SubtypeError):
    """Input data violates a precondition."""
    exit_code = 3


class CdrParseError(DataError):
    """A CDR line could not be parsed."""

    def __init__(self, message: str, line_no: int | None = None) -> None:
        super().__init__(message if line_no is None else f"line {line_no}: {message}")
        self.line_no = line_no
        self.reason = message


class ModelError(DataError):
    """Training or prediction precondition failed."""
    pass


class InvariantViolation(SubtypeError):
    """Internal invariant failed (flow/cut mismatch, degree drift, ...)."""
    exit_code = 4
