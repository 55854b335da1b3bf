"""Exception hierarchy shared by every module.

The `code` attribute feeds the CLI exit-code mapping (config -> 2,
data -> 3, numeric -> 4) and the HTTP error bodies.
"""

from __future__ import annotations


class SeedgrowError(Exception):
    """Base class for all structured errors raised by this package."""

    code = "internal"


class ConfigError(SeedgrowError):
    """Invalid or inconsistent configuration (bad key, bad value, schema)."""

    code = "config"


class DataError(SeedgrowError):
    """Invalid data: bad files, impossible generation requests, bad state."""

    code = "data"


class DimensionMismatch(DataError):
    """Grid dimensions of two operands disagree."""

    code = "dims"


class FileFormatError(DataError):
    """A serialized artifact failed to parse; names the offending field."""

    code = "format"

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class NumericError(SeedgrowError):
    """Numerical failure (NaN loss, divergence) with diagnostics attached."""

    code = "numeric"

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
