"""Exception hierarchy shared across the package."""

from __future__ import annotations


class IERError(Exception):
    """Base class for all package errors."""


class InvalidArgument(IERError, ValueError):
    pass


class SequencingError(IERError):
    """A step was appended out of order."""


class InvalidState(IERError):
    pass


class UndefinedMetric(IERError, ZeroDivisionError):
    """A ratio or proportion was requested over an empty population."""


class ConfigurationError(IERError):
    pass


class ParseError(IERError):
    """Malformed input file. ``line`` is 1-based when known."""

    def __init__(self, message: str, *, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class BackendError(IERError):
    """A chat/embedding backend failed or replied with something unusable."""

    def __init__(self, message: str, *, status: int | None = None, raw: str | None = None):
        super().__init__(message)
        self.status = status
        self.raw = raw


class BackendUnavailable(BackendError):
    """Transient failure that survived the retry budget; the run should stop and be resumed."""


class FixtureError(BackendError):
    """The scripted backend has no entry for the requested key."""


class RunInterrupted(IERError):
    """Run stopped before completion; completed batches are checkpointed."""
