"""Exceptions used in pydpparse."""

from __future__ import annotations

from typing import Iterable


class Error(Exception):
    """Base error class."""


class ParseError(Error):
    """Raised when an input file is malformed."""

    def __init__(
        self, message: str, *, path: str | None = None, line: int | None = None
    ):
        self.path = path
        self.line = line
        where = ""
        if path is not None and line is not None:
            where = f"{path}:{line}: "
        elif line is not None:
            where = f"line {line}: "
        elif path is not None:
            where = f"{path}: "
        super().__init__(f"{where}{message}")


class CorpusReadError(Error):
    """Raised when an input file cannot be opened or decoded."""


class PreconditionError(Error):
    """Raised when an operation is called outside of its preconditions."""


class ConfigurationError(Error):
    """Raised when a configuration value is invalid or incomplete."""


class DomainError(Error):
    """Raised when an argument lies outside the domain of an operation."""


class InitializationError(Error):
    """Raised when the segmentation lexicon cannot be initialized."""


class AlignmentError(Error):
    """Raised when gold and predicted corpora do not line up."""

    def __init__(self, message: str, *, index: int):
        self.index = index
        super().__init__(f"sentence {index}: {message}")


class CoverageError(Error):
    """Raised when scores or embeddings are missing for benchmark items."""

    def __init__(self, what: str, missing: Iterable[str]):
        self.missing = sorted(set(missing))
        shown = ", ".join(self.missing[:20])
        more = "" if len(self.missing) <= 20 else f" (+{len(self.missing) - 20} more)"
        super().__init__(f"missing {what}: {shown}{more}")


class UndefinedCorrelationError(Error):
    """Raised when a rank correlation is requested for a constant list."""
