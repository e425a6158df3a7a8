"""Exception hierarchy shared by every module."""


class SapaError(Exception):
    """Base class for library errors."""


class ConfigError(SapaError, ValueError):
    """Inconsistent shapes, unknown kinds or unsupported options."""


class FormatError(SapaError, ValueError):
    """Malformed tensor file. ``offset`` is the byte position where parsing failed."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class NumericError(SapaError, FloatingPointError):
    """NaN or otherwise unusable numeric input."""
