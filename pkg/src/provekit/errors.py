"""Exception types shared across the toolkit."""

from __future__ import annotations


class ProveError(Exception):
    """Base class for all toolkit errors."""


class ParseError(ProveError):
    """Raised when annotated text cannot be parsed.

    Carries the character offset of the failure and a human-readable
    reason so callers can surface precise diagnostics.
    """

    def __init__(self, position: int, reason: str):
        self.position = position
        self.reason = reason
        super().__init__(f"parse error at offset {position}: {reason}")


class SchemaError(ProveError):
    """A corpus line or payload does not match the expected schema."""

    def __init__(self, line: int | None, field: str | None, message: str):
        self.line = line
        self.field = field
        where = f"line {line}" if line is not None else "payload"
        at = f", field {field!r}" if field else ""
        super().__init__(f"schema error at {where}{at}: {message}")


class IndexOutOfRangeError(ProveError):
    """A provenance triple points outside the supplied documents."""

    def __init__(self, doc_id: int, sent_id: int):
        self.doc_id = doc_id
        self.sent_id = sent_id
        super().__init__(f"no sentence at doc {doc_id}, sentence {sent_id}")


class EmptyCorpusError(ProveError):
    """An operation that needs at least one item received none."""


class EmptyInputError(ProveError):
    """An aggregate over zero inputs was requested."""


class EmptyDocumentsError(ProveError):
    """Document sets passed to the baseline contain no sentences."""


class DegenerateInputError(ProveError):
    """Correlation input too short or with zero variance."""


class DimensionMismatchError(ProveError):
    """Vector operands do not share a dimension."""


class RemoteUnavailableError(ProveError):
    """The remote embedding backend stayed unreachable after retries."""


class GatewayUnavailableError(ProveError):
    """The judge model gateway stayed unreachable after retries."""

    def __init__(self, message: str, partial=None):
        self.partial = partial
        super().__init__(message)


class JudgeParseError(ProveError):
    """A judge response could not be decoded into a scorecard."""
