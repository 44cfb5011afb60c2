"""Text embedders. All of them return unit-norm float64 vectors of a fixed dimension."""

from __future__ import annotations

import hashlib
import re
import threading
from typing import Protocol

import numpy as np

from ..errors import BackendError, InvalidArgument
from .http import post_json

_TOKEN_RE = re.compile(r"\w+", re.UNICODE)


class Embedder(Protocol):
    dim: int

    def embed(self, text: str) -> np.ndarray: ...


def tokenize(text: str) -> list[str]:
    return [t.lower() for t in _TOKEN_RE.findall(text)]


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


class HashingEmbedder:
    """Offline bag-of-tokens embedder.

    Each lowercase word token is hashed (blake2b, salted with ``seed``) into one
    of ``dim`` buckets; bucket counts are L2-normalised. Identical text always
    gives the identical vector and all pairwise cosines are non-negative.
    """

    mode = "local"

    def __init__(self, dim: int = 256, seed: int = 0):
        if dim < 1:
            raise InvalidArgument("dim must be positive")
        self.dim = dim
        self.seed = seed
        self._salt = seed.to_bytes(8, "little", signed=True)
        self._cache: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    def bucket(self, token: str) -> int:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8, salt=self._salt).digest()
        return int.from_bytes(digest, "little") % self.dim

    def embed(self, text: str) -> np.ndarray:
        if not text or not text.strip():
            raise InvalidArgument("cannot embed empty text")
        with self._lock:
            hit = self._cache.get(text)
        if hit is not None:
            return hit
        tokens = tokenize(text)
        if not tokens:
            raise InvalidArgument(f"text has no word tokens: {text[:40]!r}")
        vec = np.zeros(self.dim, dtype=np.float64)
        for tok in tokens:
            vec[self.bucket(tok)] += 1.0
        vec /= np.linalg.norm(vec)
        vec.flags.writeable = False
        with self._lock:
            self._cache[text] = vec
        return vec


class RemoteEmbedder:
    """Client for an embeddings endpoint in the common ``{model, input} -> data[0].embedding`` shape."""

    mode = "remote"

    def __init__(
        self,
        endpoint: str,
        model: str,
        dim: int,
        token: str | None = None,
        timeout: float = 30.0,
        retries: int = 3,
        transport=None,
    ):
        self.endpoint = endpoint
        self.model = model
        self.dim = dim
        self._token = token
        self.timeout = timeout
        self.retries = retries
        self._transport = transport

    def embed(self, text: str) -> np.ndarray:
        if not text or not text.strip():
            raise InvalidArgument("cannot embed empty text")
        body = post_json(
            self.endpoint,
            {"model": self.model, "input": text},
            token=self._token,
            timeout=self.timeout,
            retries=self.retries,
            transport=self._transport,
        )
        try:
            vec = np.asarray(body["data"][0]["embedding"], dtype=np.float64)
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise BackendError("malformed embedding response", raw=str(body)[:2000]) from exc
        if vec.shape != (self.dim,):
            raise BackendError(f"embedding has shape {vec.shape}, expected ({self.dim},)")
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            raise BackendError("embedding is the zero vector")
        return vec / norm
