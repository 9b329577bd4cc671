"""Shared exception types. Every error message names the failing stage."""


class GlyphforgeError(Exception):
    """Base for all domain errors (CLI maps these to exit code 1)."""


class ShapeError(GlyphforgeError):
    pass


class ConfigError(GlyphforgeError):
    pass


class NumericalError(GlyphforgeError):
    pass


class ParseError(GlyphforgeError):
    def __init__(self, message, line=None, column=None):
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)
        self.line = line
        self.column = column


class PlanningError(GlyphforgeError):
    pass


class ConsistencyError(GlyphforgeError):
    pass


class ProtocolError(GlyphforgeError):
    pass


class TransportError(GlyphforgeError):
    """Retryable transport failure; carries the attempt count."""

    def __init__(self, message, attempts=1):
        super().__init__(f"{message} (after {attempts} attempt(s))")
        self.attempts = attempts
