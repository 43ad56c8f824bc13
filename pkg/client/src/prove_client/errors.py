"""Exceptions raised by the reward-service client."""

from __future__ import annotations

from typing import Any


class ClientError(Exception):
    """Base class for everything this package raises on purpose."""


class TransportError(ClientError):
    """The service could not be reached or kept answering 503.

    Raised after the retry budget is spent, or immediately for a 5xx
    status that retrying cannot fix.
    """


class SchemaError(ClientError):
    """The service rejected the request body (4xx).

    Carries the structured detail the server returned, so callers can
    inspect, for example, the parse position of a malformed candidate.
    The common detail keys are exposed as attributes; anything else is
    available through ``detail``.
    """

    def __init__(self, status_code: int, detail: Any):
        self.status_code = status_code
        self.detail: dict = detail if isinstance(detail, dict) else {"reason": str(detail)}
        self.where = self.detail.get("where")
        self.field = self.detail.get("field")
        self.position = self.detail.get("position")
        self.reason = self.detail.get("reason")
        super().__init__(f"service rejected the request ({status_code}): {self.detail}")
