"""Exception hierarchy."""


class FPLError(Exception):
    """Base class for every error raised by this package."""


class CatalogBoundsError(FPLError, IndexError):
    pass


class InvalidTripleError(FPLError, ValueError):
    pass


class UntrainableClientError(FPLError):
    """The client has no positive items, or every catalog item is positive."""


class ConfigError(FPLError, ValueError):
    pass


class ProtocolError(FPLError):
    """A payload violated the client/server contract."""

    def __init__(self, message: str, sender: int | None = None):
        super().__init__(message)
        self.sender = sender


class ParseError(FPLError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class UndefinedMetricError(FPLError, ValueError):
    pass
