"""Exception hierarchy shared by all roomnav modules."""


class RoomNavError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(RoomNavError, ValueError):
    """A document or object violates a structural invariant.

    ``cell`` holds the ``(row, col)`` of the first offending cell when the
    violation is tied to a location.
    """

    def __init__(self, message, cell=None):
        if cell is not None:
            message = f"{message} at cell (row={cell[0]}, col={cell[1]})"
        super().__init__(message)
        self.cell = cell


class ParseError(ValidationError):
    """Malformed or truncated input document."""


class DomainError(RoomNavError, ValueError):
    """An argument lies outside the operation's domain (e.g. a wall point)."""


class GenerationError(RoomNavError):
    """House generation could not satisfy its parameters."""


class SamplingError(RoomNavError):
    """No valid episode exists for the requested configuration."""


class ResolutionError(RoomNavError, LookupError):
    """A record references a house that is not available."""


class NoFrontierError(RoomNavError):
    """Point selection found nothing to aim for."""


class NoCandidateError(RoomNavError):
    """Every point-selection score is zero; the caller should explore instead."""
