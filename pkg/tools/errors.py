"""strkit error types.

Runtime errors are `StrkitError`; file validation failures are `SchemaError`
and carry a machine-readable code plus the path of the offending field.
"""

from enum import Enum
from typing import Optional


class ErrorCode(Enum):
    MALFORMED_JSON = "malformed_json"
    SCHEMA_VIOLATION = "schema_violation"
    INVARIANT_VIOLATION = "invariant_violation"


class StrkitError(ValueError):
    """Domain or runtime failure of a strkit operation."""


class SchemaError(StrkitError):
    """Input file rejected by parsing or validation."""

    def __init__(self, code: ErrorCode, message: str, path: Optional[str] = None):
        self.code = code
        self.path = path
        self.message = message
        where = f" at {path}" if path else ""
        super().__init__(f"{code.value}{where}: {message}")
