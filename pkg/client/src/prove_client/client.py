"""HTTP client for the provekit reward service.

Shaped for use inside RL training loops: synchronous calls, positional
response alignment, bounded retries with exponential backoff. All
scoring math lives on the server; this module only moves JSON.

The client is safe to share between worker threads. The underlying
``requests.Session`` pools connections and the client keeps no other
mutable state.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field
from typing import Any, NamedTuple, Optional, Sequence

import requests

from .errors import SchemaError, TransportError

DEFAULT_BASE_URL = "http://127.0.0.1:8750"


def _env_base_url() -> str:
    return os.environ.get("PROVE_SERVICE_URL", DEFAULT_BASE_URL)


@dataclass(frozen=True)
class ClientConfig:
    """Connection settings.

    ``base_url`` falls back to the PROVE_SERVICE_URL environment
    variable, then to the service's default local address. A request is
    attempted ``max_retries + 1`` times; the sleep before retry number k
    (1-based) is ``backoff_factor * 2**(k - 1)`` seconds.
    """

    base_url: str = field(default_factory=_env_base_url)
    timeout_s: float = 30.0
    max_retries: int = 3
    backoff_factor: float = 0.5

    def __post_init__(self):
        if self.timeout_s <= 0:
            raise ValueError("timeout_s must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries cannot be negative")
        if self.backoff_factor < 0:
            raise ValueError("backoff_factor cannot be negative")


@dataclass(frozen=True)
class RewardParts:
    """Score decomposition for one candidate."""

    r_sim: float
    r_prov: float
    r_total: float


class GroupScores(NamedTuple):
    """Result of scoring one candidate group.

    The three lists are parallel to the submitted candidates, in the
    order they were submitted. ``rewards`` repeats the ``r_total``
    column of ``breakdowns`` for direct use as the GRPO reward vector.
    """

    rewards: list[float]
    advantages: list[float]
    breakdowns: list[RewardParts]


@dataclass(frozen=True)
class Violation:
    kind: str
    segment_index: Optional[int]
    detail: str


@dataclass(frozen=True)
class ValidationResult:
    """Server-side validation verdict for one annotated text."""

    valid: bool
    violations: tuple[Violation, ...]
    warnings: tuple[Violation, ...]

    def kinds(self) -> set[str]:
        return {v.kind for v in self.violations}


_RETRYABLE_STATUS = 503


class RewardServiceClient:
    """Thin synchronous client over the reward service HTTP API.

    Candidates are never reordered: every response list is positional
    with respect to the submitted group. Retries are safe because the
    service is stateless.
    """

    def __init__(
        self,
        config: Optional[ClientConfig] = None,
        session: Optional[requests.Session] = None,
    ):
        self._config = config or ClientConfig()
        self._session = session or requests.Session()

    # -- lifecycle ---------------------------------------------------------

    def close(self) -> None:
        self._session.close()

    def __enter__(self) -> "RewardServiceClient":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    # -- API surface -------------------------------------------------------

    def health(self) -> dict:
        """Service liveness plus embedder reachability."""
        return self._request("GET", "/healthz")

    def score_group(
        self,
        reference: str,
        candidates: Sequence[str],
        overrides: Optional[dict[str, Any]] = None,
    ) -> GroupScores:
        """Score a candidate group against one reference answer.

        ``overrides`` passes through to the server's scoring config
        (keys such as alpha, beta, tau_c, tau_p, epsilon, strict_m);
        validation of both the texts and the overrides is the server's
        job and failures come back as SchemaError.
        """
        payload: dict[str, Any] = {
            "reference": reference,
            "candidates": list(candidates),
        }
        if overrides:
            payload["config"] = dict(overrides)
        body = self._request("POST", "/v1/reward", payload)
        breakdowns = [
            RewardParts(item["r_sim"], item["r_prov"], item["r_total"])
            for item in body["per_candidate"]
        ]
        return GroupScores(
            rewards=[part.r_total for part in breakdowns],
            advantages=list(body["advantages"]),
            breakdowns=breakdowns,
        )

    def validate(
        self,
        text: str,
        documents: Sequence[Sequence[str]],
        mode: Optional[str] = None,
    ) -> ValidationResult:
        """Check one annotated text against its source documents."""
        payload: dict[str, Any] = {
            "text": text,
            "documents": [list(doc) for doc in documents],
        }
        if mode is not None:
            payload["mode"] = mode
        body = self._request("POST", "/v1/validate", payload)
        return ValidationResult(
            valid=body["valid"],
            violations=tuple(Violation(**item) for item in body["violations"]),
            warnings=tuple(Violation(**item) for item in body["warnings"]),
        )

    # -- transport ---------------------------------------------------------

    def _request(self, method: str, path: str, payload: Optional[dict] = None) -> dict:
        url = self._config.base_url.rstrip("/") + path
        last_failure = "no attempt made"
        for attempt in range(self._config.max_retries + 1):
            if attempt:
                time.sleep(self._config.backoff_factor * 2 ** (attempt - 1))
            try:
                response = self._session.request(
                    method, url, json=payload, timeout=self._config.timeout_s
                )
            except (requests.ConnectionError, requests.Timeout) as exc:
                last_failure = f"{type(exc).__name__}: {exc}"
                continue
            if response.status_code == 200:
                return response.json()
            if response.status_code == _RETRYABLE_STATUS:
                last_failure = f"503: {_body_of(response)}"
                continue
            if 400 <= response.status_code < 500:
                raise SchemaError(response.status_code, _detail_of(response))
            raise TransportError(
                f"unexpected status {response.status_code} from {path}: {_body_of(response)}"
            )
        attempts = self._config.max_retries + 1
        raise TransportError(f"{url} unavailable after {attempts} attempts ({last_failure})")


def _body_of(response: requests.Response) -> Any:
    try:
        return response.json()
    except ValueError:
        return response.text


def _detail_of(response: requests.Response) -> Any:
    """Normalize the two 4xx shapes the service emits.

    Errors raised through the framework arrive nested under a "detail"
    key; handler-built bodies are flat. Either way the caller gets the
    innermost structure.
    """
    body = _body_of(response)
    if isinstance(body, dict) and "detail" in body:
        return body["detail"]
    return body
