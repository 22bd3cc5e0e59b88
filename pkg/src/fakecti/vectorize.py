"""Tuple text vectorization: tokenizer, TF-IDF, cosine, embedding providers.

The TF-IDF variant is fixed: raw term counts, smooth idf
ln((1+N)/(1+df)) + 1, L2-normalized output. Tuples are serialized as the
plain space-join of subject, relation and object before vectorizing.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Protocol, Sequence

import numpy as np
import requests

from .fileio import IoFailure


class EmptyCorpus(Exception):
    pass


class DimensionMismatch(Exception):
    pass


class ProviderFailure(Exception):
    pass


_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lowercase and split on maximal runs of non-alphanumeric characters."""
    return _TOKEN_RE.findall(text.lower())


def tuple_text(subject: str, relation: str, obj: str) -> str:
    """Serialize a tuple as `subject relation object`, single-space joined."""
    return " ".join(part.strip() for part in (subject, relation, obj))


@dataclass(frozen=True)
class SparseVector:
    """L2-normalized sparse vector; indices strictly increasing."""

    indices: tuple[int, ...]
    weights: tuple[float, ...]

    def is_zero(self) -> bool:
        return not self.indices

    def norm(self) -> float:
        return math.sqrt(sum(w * w for w in self.weights))


ZERO_SPARSE = SparseVector(indices=(), weights=())


@dataclass(frozen=True)
class TfidfModel:
    vocabulary: dict[str, int]
    idf: tuple[float, ...]
    document_count: int


def fit_tfidf(documents: Sequence[str]) -> TfidfModel:
    """Fit vocabulary (first-appearance order) and smooth idf weights."""
    if not documents:
        raise EmptyCorpus("fit_tfidf needs at least one document")
    vocabulary: dict[str, int] = {}
    df = []
    for doc in documents:
        seen = set()
        for token in tokenize(doc):
            if token not in vocabulary:
                vocabulary[token] = len(vocabulary)
                df.append(0)
            if token not in seen:
                seen.add(token)
                df[vocabulary[token]] += 1
    n = len(documents)
    idf = tuple(math.log((1 + n) / (1 + d)) + 1.0 for d in df)
    return TfidfModel(vocabulary=vocabulary, idf=idf, document_count=n)


def transform_tfidf(model: TfidfModel, document: str) -> SparseVector:
    """Raw tf x idf over the fitted vocabulary, L2-normalized.

    Out-of-vocabulary terms are ignored; an all-OOV document maps to the
    zero vector.
    """
    counts: dict[int, int] = {}
    for token in tokenize(document):
        idx = model.vocabulary.get(token)
        if idx is not None:
            counts[idx] = counts.get(idx, 0) + 1
    if not counts:
        return ZERO_SPARSE
    indices = sorted(counts)
    weights = [counts[i] * model.idf[i] for i in indices]
    norm = math.sqrt(sum(w * w for w in weights))
    weights = [w / norm for w in weights]
    return SparseVector(indices=tuple(indices), weights=tuple(weights))


def _sparse_dot(x: SparseVector, y: SparseVector) -> float:
    total = 0.0
    i = j = 0
    while i < len(x.indices) and j < len(y.indices):
        xi, yj = x.indices[i], y.indices[j]
        if xi == yj:
            total += x.weights[i] * y.weights[j]
            i += 1
            j += 1
        elif xi < yj:
            i += 1
        else:
            j += 1
    return total


def cosine(x, y) -> float:
    """Cosine similarity; 0.0 when either vector is all-zero."""
    if isinstance(x, SparseVector) and isinstance(y, SparseVector):
        if x.is_zero() or y.is_zero():
            return 0.0
        return _sparse_dot(x, y) / (x.norm() * y.norm())
    if isinstance(x, SparseVector) or isinstance(y, SparseVector):
        raise DimensionMismatch("cannot mix sparse and dense vectors")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise DimensionMismatch(f"dense shapes differ: {x.shape} vs {y.shape}")
    nx = float(np.linalg.norm(x))
    ny = float(np.linalg.norm(y))
    if nx == 0.0 or ny == 0.0:
        return 0.0
    return float(np.dot(x, y) / (nx * ny))


_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def _fnv1a64(data: str) -> int:
    h = _FNV_OFFSET
    for byte in data.encode("utf-8"):
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def stub_embed(
    text: str,
    dimension: int = 256,
    synonym_map: Optional[Mapping[str, str]] = None,
) -> np.ndarray:
    """Deterministic hashed bag-of-words embedding for offline runs.

    Tokens are canonicalized through synonym_map first, so texts that differ
    only by mapped synonyms embed identically.
    """
    if dimension < 2:
        raise ValueError("dimension must be >= 2")
    vec = np.zeros(dimension, dtype=float)
    for token in tokenize(text):
        if synonym_map is not None:
            token = synonym_map.get(token, token)
        vec[_fnv1a64(token) % dimension] += 1.0
    norm = np.linalg.norm(vec)
    if norm > 0:
        vec /= norm
    return vec


class EmbeddingProvider(Protocol):
    """Deterministic text-to-vector provider; same text must give same vector."""

    name: str
    dimension: int

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]: ...


class StubEmbeddingProvider:
    """In-process provider backed by stub_embed."""

    def __init__(self, dimension: int = 256, synonym_map: Optional[Mapping[str, str]] = None):
        self.dimension = dimension
        self.synonym_map = dict(synonym_map) if synonym_map else None
        self.name = f"stub-{dimension}"
        self.requests = 0

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]:
        self.requests += 1
        return [stub_embed(t, self.dimension, self.synonym_map) for t in texts]


class RemoteEmbeddingProvider:
    """HTTP embedding endpoint: POST {"input": [...], "model": id}."""

    def __init__(
        self,
        endpoint: str,
        model_id: str,
        dimension: int,
        api_key: Optional[str] = None,
        timeout: float = 60.0,
    ):
        self.endpoint = endpoint
        self.model_id = model_id
        self.dimension = dimension
        self.api_key = api_key
        self.timeout = timeout
        self.name = f"remote-{model_id}"

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = requests.post(
                self.endpoint,
                json={"input": list(texts), "model": self.model_id},
                headers=headers,
                timeout=self.timeout,
            )
            resp.raise_for_status()
            payload = resp.json()
            rows = [np.asarray(item["embedding"], dtype=float) for item in payload["data"]]
        except (requests.RequestException, OSError, ValueError, KeyError, TypeError) as exc:
            raise ProviderFailure(f"embedding request failed: {exc}") from exc
        if len(rows) != len(texts):
            raise ProviderFailure(f"expected {len(texts)} embeddings, got {len(rows)}")
        for row in rows:
            if row.shape != (self.dimension,):
                raise DimensionMismatch(
                    f"provider returned dimension {row.shape}, expected ({self.dimension},)"
                )
        return rows


def _text_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class EmbeddingCache:
    """Embedding cache keyed by (provider name, text hash).

    Optionally persisted as append-only JSONL {provider, text_hash, vector}.
    Reads are lock-free on the underlying dict; writes take the lock.
    """

    def __init__(self, path: Optional[str | Path] = None):
        self._mem: dict[tuple[str, str], np.ndarray] = {}
        self._path = Path(path) if path else None
        self._lock = threading.Lock()
        if self._path and self._path.exists():
            try:
                with open(self._path, "r", encoding="utf-8") as fh:
                    for line in fh:
                        if not line.strip():
                            continue
                        rec = json.loads(line)
                        key = (rec["provider"], rec["text_hash"])
                        self._mem[key] = np.asarray(rec["vector"], dtype=float)
            except (OSError, ValueError, KeyError) as exc:
                raise IoFailure(f"cannot read embedding cache {self._path}: {exc}") from exc

    def get(self, provider: str, text: str) -> Optional[np.ndarray]:
        return self._mem.get((provider, _text_hash(text)))

    def put(self, provider: str, text: str, vector: np.ndarray) -> None:
        key = (provider, _text_hash(text))
        with self._lock:
            self._mem[key] = vector
            if self._path:
                rec = {"provider": provider, "text_hash": key[1], "vector": vector.tolist()}
                with open(self._path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(rec) + "\n")


def embed_with_provider(
    provider: EmbeddingProvider,
    texts: Sequence[str],
    cache: Optional[EmbeddingCache] = None,
) -> list[np.ndarray]:
    """Embed texts in order, serving repeats and cached entries locally.

    Vectors are re-normalized defensively so downstream cosine math can rely
    on unit norms.
    """
    out: list[Optional[np.ndarray]] = [None] * len(texts)
    missing: dict[str, list[int]] = {}
    for i, text in enumerate(texts):
        hit = cache.get(provider.name, text) if cache else None
        if hit is not None:
            out[i] = hit
        else:
            missing.setdefault(text, []).append(i)
    if missing:
        unique = list(missing)
        vectors = provider.embed_batch(unique)
        if len(vectors) != len(unique):
            raise ProviderFailure("provider returned wrong number of vectors")
        for text, vec in zip(unique, vectors):
            vec = np.asarray(vec, dtype=float)
            if vec.shape != (provider.dimension,):
                raise DimensionMismatch(
                    f"provider returned dimension {vec.shape}, expected ({provider.dimension},)"
                )
            norm = np.linalg.norm(vec)
            if norm > 0:
                vec = vec / norm
            for i in missing[text]:
                out[i] = vec
            if cache:
                cache.put(provider.name, text, vec)
    return [v for v in out]  # type: ignore[misc]
