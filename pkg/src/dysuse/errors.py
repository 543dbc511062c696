"""Exception types raised across the package."""


class ValidationError(ValueError):
    """An argument or input violates a documented precondition."""


class ParseError(ValueError):
    """A text input could not be parsed.

    ``line`` is the 1-based line number when known.
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class CapacityError(RuntimeError):
    """An exact computation would exceed its enumeration budget."""


class CorruptFileError(ValueError):
    """A checkpoint or archive is truncated or malformed."""
