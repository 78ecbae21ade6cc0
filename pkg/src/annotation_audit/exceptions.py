"""Exception types raised by annotation_audit."""


class ValidationError(ValueError):
    """Input violates a documented invariant or precondition."""


class StoreFormatError(ValueError):
    """A line of an annotation store could not be parsed."""

    def __init__(self, path, lineno, message):
        self.path = path
        self.lineno = lineno
        super().__init__(f"{path}:{lineno}: {message}")


class EstimationError(RuntimeError):
    """An estimator could not produce a finite estimate."""


class AuthenticationError(RuntimeError):
    """The annotation endpoint rejected the API credentials."""
