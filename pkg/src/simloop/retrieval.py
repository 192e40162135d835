"""Vector retrieval over knowledge chunks, with keyword-tag priority.

The built-in embedder hashes lower-cased character trigrams into a fixed
number of buckets and L2-normalizes the counts.  It is deterministic,
dependency-free and good enough to rank short documentation chunks; a
remote embedding endpoint can be swapped in through the same interface.
"""

from __future__ import annotations

import math
import os
import zlib
from dataclasses import dataclass
from typing import Protocol, Sequence

import httpx
import numpy as np

from .errors import EmptyIndex, ProviderUnavailable
from .knowledge_base import KnowledgeChunk
from .query_planner import QueryPlan

DEFAULT_DIM = 256

MATCHED_BY_KEYWORD = "keyword_tag"
MATCHED_BY_VECTOR = "vector"


class EmbeddingProvider(Protocol):
    dim: int

    def embed(self, text: str) -> np.ndarray: ...


class HashedTrigramEmbedder:
    """Hash character 3-grams of the lower-cased text into ``dim`` buckets."""

    def __init__(self, dim: int = DEFAULT_DIM) -> None:
        if dim < 1:
            raise ValueError(f"dim must be positive, got {dim}")
        self.dim = dim

    def embed(self, text: str) -> np.ndarray:
        vector = np.zeros(self.dim, dtype=np.float64)
        lowered = text.lower()
        for i in range(len(lowered) - 2):
            gram = lowered[i : i + 3]
            vector[zlib.crc32(gram.encode("utf-8")) % self.dim] += 1.0
        norm = float(np.linalg.norm(vector))
        if norm > 0.0:
            vector /= norm
        return vector


class HttpEmbedder:
    """Client for a remote embedding endpoint (OpenAI-style response).

    Only the interface matters for this package; nothing downstream depends
    on what a live endpoint actually returns.
    """

    def __init__(
        self,
        base_url: str,
        model_name: str,
        dim: int,
        api_key_env_var: str = "SIMLOOP_API_KEY",
        timeout_s: float = 30.0,
        transport: httpx.BaseTransport | None = None,
    ) -> None:
        self.base_url = base_url
        self.model_name = model_name
        self.dim = dim
        self.api_key_env_var = api_key_env_var
        self._client = httpx.Client(transport=transport, timeout=timeout_s)

    def embed(self, text: str) -> np.ndarray:
        headers = {}
        key = os.environ.get(self.api_key_env_var)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        try:
            response = self._client.post(
                self.base_url,
                json={"model": self.model_name, "input": text},
                headers=headers,
            )
            response.raise_for_status()
            values = response.json()["data"][0]["embedding"]
        except (httpx.HTTPError, ValueError, LookupError, TypeError) as exc:
            raise ProviderUnavailable(f"embedding endpoint failed: {exc}") from exc
        vector = np.asarray(values, dtype=np.float64)
        if vector.shape != (self.dim,):
            raise ProviderUnavailable(
                f"embedding endpoint returned shape {vector.shape}, expected ({self.dim},)"
            )
        norm = float(np.linalg.norm(vector))
        return vector / norm if norm > 0.0 else vector


# ===========================================================================
# Index
# ===========================================================================


@dataclass(frozen=True, eq=False, slots=True)
class IndexEntry:
    chunk_id: str
    keywords: tuple[str, ...]
    vector: np.ndarray


class VectorIndex:
    """Chunk vectors plus the embedder queries must go through."""

    def __init__(self, entries: Sequence[IndexEntry], embedder: EmbeddingProvider) -> None:
        self.entries = tuple(entries)
        self.embedder = embedder
        self._matrix = (
            np.stack([e.vector for e in self.entries])
            if self.entries
            else np.zeros((0, embedder.dim))
        )

    def __len__(self) -> int:
        return len(self.entries)


def build_index(chunks: Sequence[KnowledgeChunk], embedder: EmbeddingProvider | None = None) -> VectorIndex:
    embedder = embedder or HashedTrigramEmbedder()
    entries = [
        IndexEntry(chunk.id, tuple(k.lower() for k in chunk.keywords), embedder.embed(chunk.text))
        for chunk in chunks
    ]
    return VectorIndex(entries, embedder)


# ===========================================================================
# Retrieval
# ===========================================================================


@dataclass(frozen=True, slots=True)
class RetrievalResult:
    chunk_id: str
    score: float
    matched_by: str


@dataclass(frozen=True, slots=True)
class ContextGroup:
    sub_request_text: str
    keyword: str
    results: tuple[RetrievalResult, ...]


@dataclass(frozen=True, slots=True)
class ContextBundle:
    groups: tuple[ContextGroup, ...]

    def chunk_ids(self) -> list[str]:
        return [r.chunk_id for g in self.groups for r in g.results]


def retrieve(index: VectorIndex, query_text: str, k: int) -> list[RetrievalResult]:
    """Top-``k`` chunks by cosine similarity; ties break on chunk id."""
    if len(index) == 0:
        raise EmptyIndex("cannot retrieve from an index with no entries")
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    ranked = _rank_by_vector(index, query_text)
    return ranked[:k]


def _rank_by_vector(index: VectorIndex, query_text: str) -> list[RetrievalResult]:
    query = index.embedder.embed(query_text)
    # Exactly-rounded sums make scores independent of reduction order, so
    # equal-cosine ties always resolve by chunk id, on any BLAS build.
    products = index._matrix * query
    results = [
        RetrievalResult(entry.chunk_id, min(1.0, max(-1.0, math.fsum(row))), MATCHED_BY_VECTOR)
        for entry, row in zip(index.entries, products.tolist())
    ]
    results.sort(key=lambda r: (-r.score, r.chunk_id))
    return results


def retrieve_planned(index: VectorIndex, plan: QueryPlan, k: int) -> ContextBundle:
    """Per-plan retrieval: keyword-tagged chunks first, vectors fill to ``k``.

    For each sub-query, chunks whose keyword tags contain the sub-query
    keyword (case-insensitive) come first with score 1.0; the remainder of
    the ``k`` budget is filled by vector search over the sub-request text
    and keyword combined.
    """
    if len(index) == 0:
        raise EmptyIndex("cannot retrieve from an index with no entries")
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")

    groups: list[ContextGroup] = []
    for sub in plan.sub_queries:
        results: list[RetrievalResult] = []
        keyword = sub.keyword.strip().lower()
        if keyword:
            tagged = sorted(e.chunk_id for e in index.entries if keyword in e.keywords)
            results.extend(
                RetrievalResult(chunk_id, 1.0, MATCHED_BY_KEYWORD) for chunk_id in tagged[:k]
            )
        if len(results) < k:
            collected = {r.chunk_id for r in results}
            # Without a keyword this must embed the sub-request alone so a
            # degenerate plan reproduces plain retrieve() exactly.
            query_text = f"{sub.sub_request_text} {keyword}" if keyword else sub.sub_request_text
            for candidate in _rank_by_vector(index, query_text):
                if len(results) >= k:
                    break
                if candidate.chunk_id not in collected:
                    results.append(candidate)
        groups.append(ContextGroup(sub.sub_request_text, sub.keyword, tuple(results)))
    return ContextBundle(tuple(groups))


# ===========================================================================
# Serialization (for ``simloop kb-build`` artifacts)
# ===========================================================================


def index_to_dict(index: VectorIndex) -> dict:
    if not isinstance(index.embedder, HashedTrigramEmbedder):
        raise ValueError("only hashed-trigram indexes can be serialized")
    return {
        "embedder": {"kind": "hashed-trigram", "dim": index.embedder.dim},
        "entries": [
            {"chunk_id": e.chunk_id, "keywords": list(e.keywords), "vector": e.vector.tolist()}
            for e in index.entries
        ],
    }


def index_from_dict(data: dict) -> VectorIndex:
    spec = data["embedder"]
    if spec["kind"] != "hashed-trigram":
        raise ValueError(f"unknown embedder kind {spec['kind']!r}")
    embedder = HashedTrigramEmbedder(spec["dim"])
    entries = [
        IndexEntry(
            e["chunk_id"], tuple(e["keywords"]), np.asarray(e["vector"], dtype=np.float64)
        )
        for e in data["entries"]
    ]
    return VectorIndex(entries, embedder)
