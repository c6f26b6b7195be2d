"""Text embeddings and cosine similarity.

Two providers share the :class:`Embedder` protocol: :class:`OfflineEmbedder`,
a seeded bag-of-tokens hasher that needs no network, and :class:`HttpEmbedder`
for an embeddings endpoint speaking ``{"input", "model"} -> data[0].embedding``.
"""

from __future__ import annotations

import hashlib
import re
import time
from typing import Protocol

import httpx
import numpy as np

from .errors import InvalidArgument, ProviderError

__all__ = ["Embedder", "OfflineEmbedder", "HttpEmbedder", "cosine", "zero_vector"]

TOKEN_RE = re.compile(r"[A-Za-z0-9_]+")
DEFAULT_DIMENSION = 256
DEFAULT_SEED = 20250101


class Embedder(Protocol):
    dimension: int

    def embed(self, text: str) -> np.ndarray: ...


def zero_vector(dimension: int = DEFAULT_DIMENSION) -> np.ndarray:
    return np.zeros(dimension, dtype=np.float64)


def _normalize(vector: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vector))
    if norm == 0.0:
        return vector
    return vector / norm


class OfflineEmbedder:
    """Deterministic hashing embedder.

    Each lower-cased alphanumeric token is hashed (keyed BLAKE2b, so the
    result does not depend on ``PYTHONHASHSEED`` or the platform) into one of
    ``dimension`` buckets; the count vector is L2-normalized.  Empty or
    whitespace-only text maps to the zero vector.
    """

    def __init__(self, dimension: int = DEFAULT_DIMENSION, seed: int = DEFAULT_SEED) -> None:
        if dimension <= 0:
            raise InvalidArgument("dimension must be positive")
        self.dimension = dimension
        self.seed = seed
        self._key = seed.to_bytes(8, "little", signed=False)
        self._memo: dict[str, np.ndarray] = {}

    def bucket(self, token: str) -> int:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=self._key).digest()
        return int.from_bytes(digest, "little") % self.dimension

    def embed(self, text: str) -> np.ndarray:
        cached = self._memo.get(text)
        if cached is not None:
            return cached.copy()
        counts = zero_vector(self.dimension)
        for token in TOKEN_RE.findall(text.lower()):
            counts[self.bucket(token)] += 1.0
        vector = _normalize(counts)
        self._memo[text] = vector
        return vector.copy()


class HttpEmbedder:
    """Client for a remote embeddings endpoint."""

    def __init__(
        self,
        url: str,
        model: str,
        api_key: str | None = None,
        *,
        max_attempts: int = 3,
        backoff_seconds: float = 0.5,
        timeout_seconds: float = 30.0,
        client: httpx.Client | None = None,
    ) -> None:
        self.url = url
        self.model = model
        self.max_attempts = max_attempts
        self.backoff_seconds = backoff_seconds
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = client or httpx.Client(timeout=timeout_seconds)
        self._headers = headers
        self.dimension = 0
        self._memo: dict[str, np.ndarray] = {}

    def embed(self, text: str) -> np.ndarray:
        if not text.strip():
            return zero_vector(self.dimension or DEFAULT_DIMENSION)
        if text in self._memo:
            return self._memo[text].copy()
        start = time.monotonic()
        last_error: Exception | None = None
        for attempt in range(1, self.max_attempts + 1):
            try:
                response = self._client.post(
                    self.url, json={"input": text, "model": self.model}, headers=self._headers
                )
                response.raise_for_status()
                vector = np.asarray(response.json()["data"][0]["embedding"], dtype=np.float64)
                break
            except (httpx.HTTPError, KeyError, IndexError, TypeError, ValueError) as exc:
                last_error = exc
                if attempt < self.max_attempts:
                    time.sleep(self.backoff_seconds * 2 ** (attempt - 1))
        else:
            raise ProviderError(
                f"embedding request failed after {self.max_attempts} attempts: {last_error}",
                attempts=self.max_attempts,
                elapsed_seconds=time.monotonic() - start,
            )
        self.dimension = vector.shape[0]
        vector = _normalize(vector)
        self._memo[text] = vector
        return vector.copy()


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity; 0 when either vector is all zeros."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise InvalidArgument(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    value = float(np.dot(u, v)) / (nu * nv)
    return min(1.0, max(-1.0, value))
