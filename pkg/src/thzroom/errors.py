"""Exception types raised by thzroom."""


class ThzRoomError(Exception):
    """Base class for all package errors."""


class InvalidGeometryError(ThzRoomError, ValueError):
    pass


class MaterialValidationError(ThzRoomError, ValueError):
    """A material table failed ingestion checks.

    ``row`` is the 1-based line number in the source file when the problem
    can be pinned to a single line (the header is line 1).
    """

    def __init__(self, message: str, row: int | None = None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class OutOfBandError(ThzRoomError, ValueError):
    """Frequency query outside the span of a tabulated quantity."""


class NoPathError(ThzRoomError, LookupError):
    pass


class ConfigError(ThzRoomError, ValueError):
    pass
