"""Exception types shared across the package."""


class ParameterError(ValueError):
    """Invalid argument or configuration value."""


class FormatError(ValueError):
    """Malformed binary input. ``offset`` is the byte position of the problem."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class NumericalError(ArithmeticError):
    """Non-finite loss, gradient or update. ``state`` carries a diagnostic dump."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state or {}
