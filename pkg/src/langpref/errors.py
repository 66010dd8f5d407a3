"""Exception hierarchy shared across the package.

Every error the CLI can surface maps to one of three exit codes: bad
configuration (2), bad or inconsistent input data (3), transport failure
when talking to the cue model (4). Library callers catch the classes;
the CLI maps ``exit_code`` to ``sys.exit``.
"""

from __future__ import annotations


class LangprefError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(LangprefError):
    """Invalid configuration: bad key, bad value, inconsistent thresholds."""

    exit_code = 2


class DataError(LangprefError):
    """Invalid or inconsistent input data."""

    exit_code = 3


class ParseError(DataError):
    """A file could not be parsed. Carries the offending line number."""

    def __init__(self, message: str, *, path: str | None = None, line: int | None = None):
        loc = ""
        if path is not None:
            loc = f"{path}:"
        if line is not None:
            loc = f"{loc}{line}:"
        super().__init__(f"{loc} {message}" if loc else message)
        self.path = path
        self.line = line


class IntegrityError(DataError):
    """Structurally valid inputs that contradict each other."""


class ValidationError(DataError):
    """A payload failed schema validation. Carries the raw payload."""

    def __init__(self, message: str, *, payload: object = None):
        super().__init__(message)
        self.payload = payload


class DomainError(DataError, ValueError):
    """An argument is outside its mathematical domain."""


class TransportError(LangprefError):
    """The cue model endpoint could not be reached or kept failing."""

    exit_code = 4
