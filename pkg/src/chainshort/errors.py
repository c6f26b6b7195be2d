"""Exception hierarchy shared by every chainshort module."""

from __future__ import annotations


class ChainShortError(Exception):
    """Base class for all errors raised by chainshort."""


class InvalidArgument(ChainShortError, ValueError):
    pass


class ForwardViolation(InvalidArgument):
    """A shortcut was requested with ``from_index >= to_index``."""


class UnknownNode(ChainShortError, KeyError):
    pass


class ParseError(ChainShortError, ValueError):
    """A trajectory or library file does not match its schema."""

    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MissingAnnotation(ChainShortError):
    """A node or shortcut lacks the embedding, compilable flag or value needed."""


class EmptyCorpus(ChainShortError, ValueError):
    pass


class InvalidBudget(InvalidArgument):
    pass


class ProviderError(ChainShortError):
    """Transport or protocol failure talking to a live model endpoint."""

    def __init__(self, message: str, attempts: int = 1, elapsed_seconds: float = 0.0) -> None:
        super().__init__(message)
        self.attempts = attempts
        self.elapsed_seconds = elapsed_seconds


class ScriptUnderflow(ChainShortError):
    """The scripted backend ran out of replies for a role."""


class SynthesisError(ChainShortError):
    pass


class RetrievalIndexError(ChainShortError):
    pass


class ConfigurationError(ChainShortError):
    pass


class SandboxEnvironmentError(ChainShortError):
    """The check command's interpreter or compiler is not available."""
