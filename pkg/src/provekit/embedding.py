"""Sentence embedding providers and greedy cosine alignment.

The local provider needs no network or model weights: it hashes
lowercase tokens into a fixed 8192-dimensional term-frequency vector
with 64-bit FNV-1a and L2-normalizes, which makes every run bit-for-bit
reproducible. The remote provider speaks a minimal JSON protocol
(``{"sentences": [...]}`` in, ``{"vectors": [[...], ...]}`` out) with
retries, an in-run cache, and a bounded number of in-flight requests.
"""

from __future__ import annotations

import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Protocol, Sequence

import numpy as np
import requests

from provekit.errors import DimensionMismatchError, RemoteUnavailableError
from provekit.textseg import tokenize

DEFAULT_DIMENSION = 8192

_FNV_OFFSET = 14695981039346656037
_FNV_PRIME = 1099511628211
_MASK64 = (1 << 64) - 1


@lru_cache(maxsize=65536)
def _fnv1a64(token: str) -> int:
    h = _FNV_OFFSET
    for byte in token.encode("utf-8"):
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


class EmbeddingProvider(Protocol):
    kind: str

    def embed_batch(self, sentences: Sequence[str]) -> np.ndarray: ...


class LocalHashedTfEmbedder:
    """Deterministic hashed term-frequency embedder."""

    kind = "local_hashed_tf"

    def __init__(self, dimension: int = DEFAULT_DIMENSION):
        if dimension <= 0:
            raise ValueError("dimension must be positive")
        self.dimension = dimension

    def embed_batch(self, sentences: Sequence[str]) -> np.ndarray:
        if not sentences:
            raise ValueError("embed_batch needs at least one sentence")
        out = np.zeros((len(sentences), self.dimension), dtype=np.float64)
        for row, sentence in enumerate(sentences):
            for token in tokenize(sentence):
                out[row, _fnv1a64(token) % self.dimension] += 1.0
        norms = np.linalg.norm(out, axis=1, keepdims=True)
        np.divide(out, norms, out=out, where=norms > 0)
        return out


class RemoteEmbedder:
    """Client for an HTTP embedding service.

    Configuration falls back to the PROVE_EMBED_URL, PROVE_EMBED_API_KEY,
    and PROVE_EMBED_TIMEOUT_MS environment variables. Failed batches are
    retried with exponential backoff; persistent failure raises
    RemoteUnavailableError. Responses are cached per sentence for the
    lifetime of the instance.
    """

    kind = "remote_service"

    def __init__(
        self,
        endpoint: Optional[str] = None,
        api_key: Optional[str] = None,
        timeout_s: Optional[float] = None,
        retries: int = 3,
        backoff_s: float = 0.25,
        max_in_flight: int = 8,
        batch_size: int = 64,
    ):
        self.endpoint = endpoint or os.environ.get("PROVE_EMBED_URL")
        if not self.endpoint:
            raise ValueError("remote embedder needs an endpoint (PROVE_EMBED_URL)")
        self.api_key = api_key or os.environ.get("PROVE_EMBED_API_KEY")
        if timeout_s is None:
            timeout_s = float(os.environ.get("PROVE_EMBED_TIMEOUT_MS", "10000")) / 1000.0
        self.timeout_s = timeout_s
        self.retries = retries
        self.backoff_s = backoff_s
        self.max_in_flight = max(1, max_in_flight)
        self.batch_size = max(1, batch_size)
        self._cache: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()
        self._dimension: Optional[int] = None

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        return headers

    def _post_batch(self, batch: list[str]) -> list[np.ndarray]:
        last_error: Exception | None = None
        for attempt in range(self.retries + 1):
            try:
                resp = requests.post(
                    self.endpoint,
                    json={"sentences": batch},
                    headers=self._headers(),
                    timeout=self.timeout_s,
                )
                if resp.status_code >= 500:
                    raise RemoteUnavailableError(f"backend returned {resp.status_code}")
                if resp.status_code != 200:
                    raise RemoteUnavailableError(
                        f"backend rejected request: {resp.status_code} {resp.text[:200]}"
                    )
                vectors = resp.json().get("vectors")
                if not isinstance(vectors, list) or len(vectors) != len(batch):
                    raise RemoteUnavailableError("backend returned a malformed payload")
                rows = [np.asarray(v, dtype=np.float64) for v in vectors]
                for row in rows:
                    if row.ndim != 1:
                        raise DimensionMismatchError("vectors must be flat lists")
                    if self._dimension is None:
                        self._dimension = row.shape[0]
                    elif row.shape[0] != self._dimension:
                        raise DimensionMismatchError(
                            f"vector of dimension {row.shape[0]}, expected {self._dimension}"
                        )
                return rows
            except DimensionMismatchError:
                raise
            except (requests.RequestException, ValueError, RemoteUnavailableError) as exc:
                last_error = exc
                if attempt < self.retries:
                    time.sleep(self.backoff_s * (2**attempt))
        raise RemoteUnavailableError(f"embedding backend unavailable: {last_error}")

    def embed_batch(self, sentences: Sequence[str]) -> np.ndarray:
        if not sentences:
            raise ValueError("embed_batch needs at least one sentence")
        with self._lock:
            todo = [s for s in dict.fromkeys(sentences) if s not in self._cache]
        if todo:
            batches = [
                todo[i : i + self.batch_size]
                for i in range(0, len(todo), self.batch_size)
            ]
            with ThreadPoolExecutor(max_workers=self.max_in_flight) as pool:
                results = list(pool.map(self._post_batch, batches))
            with self._lock:
                for batch, rows in zip(batches, results):
                    for sentence, row in zip(batch, rows):
                        self._cache[sentence] = row
        with self._lock:
            rows = [self._cache[s] for s in sentences]
        return np.stack(rows)


def embedder_from_env(kind: str = "local") -> EmbeddingProvider:
    """Build a provider by short name: ``local`` or ``remote``."""
    if kind == "local":
        return LocalHashedTfEmbedder()
    if kind == "remote":
        return RemoteEmbedder()
    raise ValueError(f"unknown embedder kind {kind!r}")


# --------------------------------------------------------------------------
# cosine and alignment

def cosine(a, b) -> float:
    """Cosine similarity, 0.0 when either vector has zero norm."""
    va = np.asarray(a, dtype=np.float64)
    vb = np.asarray(b, dtype=np.float64)
    if va.shape != vb.shape:
        raise DimensionMismatchError(f"shapes {va.shape} and {vb.shape} differ")
    na = np.linalg.norm(va)
    nb = np.linalg.norm(vb)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(va, vb) / (na * nb))


def cosine_matrix(rows_a: np.ndarray, rows_b: np.ndarray) -> np.ndarray:
    """Pairwise cosine similarities between row sets; zero-norm rows
    yield zero similarity."""
    if rows_a.shape[1] != rows_b.shape[1]:
        raise DimensionMismatchError(
            f"dimensions {rows_a.shape[1]} and {rows_b.shape[1]} differ"
        )

    def normalize(rows: np.ndarray) -> np.ndarray:
        norms = np.linalg.norm(rows, axis=1, keepdims=True)
        out = np.zeros_like(rows, dtype=np.float64)
        np.divide(rows, norms, out=out, where=norms > 0)
        return out

    return normalize(rows_a) @ normalize(rows_b).T


@dataclass(frozen=True)
class AlignmentPair:
    """Greedy best match for one source sentence. Ties in cosine break
    toward the lowest target index."""

    source_index: int
    target_index: int
    cosine: float
    passed_gate: bool


def _align(matrix: np.ndarray, threshold: float) -> list[AlignmentPair]:
    pairs = []
    for i in range(matrix.shape[0]):
        j = int(np.argmax(matrix[i]))
        score = float(matrix[i, j])
        pairs.append(AlignmentPair(i, j, score, score >= threshold))
    return pairs


def align_forward(
    candidates: Sequence[str],
    references: Sequence[str],
    provider: EmbeddingProvider,
    threshold: float,
) -> list[AlignmentPair]:
    """Best reference for each candidate sentence, gated at threshold."""
    if not candidates or not references:
        raise ValueError("alignment needs non-empty sentence lists")
    matrix = cosine_matrix(
        provider.embed_batch(list(candidates)), provider.embed_batch(list(references))
    )
    return _align(matrix, threshold)


def align_reverse(
    references: Sequence[str],
    candidates: Sequence[str],
    provider: EmbeddingProvider,
    threshold: float,
) -> list[AlignmentPair]:
    """Best candidate for each reference sentence, gated at threshold."""
    if not references or not candidates:
        raise ValueError("alignment needs non-empty sentence lists")
    matrix = cosine_matrix(
        provider.embed_batch(list(references)), provider.embed_batch(list(candidates))
    )
    return _align(matrix, threshold)
