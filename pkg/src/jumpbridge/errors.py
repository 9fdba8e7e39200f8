"""Exception hierarchy.

Every exception carries an ``exit_code`` so the CLI can map failures to the
documented process exit status without a lookup table.
"""

from __future__ import annotations


class JumpBridgeError(Exception):
    exit_code = 1


class UsageError(JumpBridgeError):
    exit_code = 1


class DataError(JumpBridgeError):
    """Bad or inconsistent input data."""

    exit_code = 2


class ParseError(DataError):
    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.row = row
        self.column = column


class SizeError(DataError):
    pass


class NormalizationError(DataError):
    pass


class StateError(DataError):
    pass


class NumericalError(JumpBridgeError):
    exit_code = 3


class DomainError(NumericalError, ValueError):
    pass


class EstimationError(NumericalError):
    pass


class UnsupportedOperationError(JumpBridgeError):
    exit_code = 1
