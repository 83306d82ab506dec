"""Text embedding and tiered top-k retrieval over admissible fragments.

Retrieval ranks fragments by cosine similarity between the query embedding
and fragment *key* embeddings, separately for the reader's own private tier
and the cross-user shared tier, keeping at most ``k_user`` / ``k_cross``
results at or above the similarity threshold. Only admissible fragments are
ever considered, and fragments newer than the query tick are not visible.

The deterministic embedder hashes character n-grams into a fixed-dimension
unit vector. Similarity is then a pure function of surface text: identical
strings embed identically (cosine 1.0), which is what lets scripted agents
recognize an exact repeat without any remote model.
"""

from __future__ import annotations

import json
import urllib.error
import urllib.request
from dataclasses import dataclass
from hashlib import blake2b
from typing import Protocol, runtime_checkable

import numpy as np

from .access import AccessTimeline
from .errors import DimensionMismatch, EmptyText, RemoteUnavailable
from .principals import PrincipalId
from .store import MemoryStore, Tier

DEFAULT_SIMILARITY_THRESHOLD = 0.1


@runtime_checkable
class Embedder(Protocol):
    dimension: int

    def embed(self, text: str) -> np.ndarray: ...


class DeterministicEmbedder:
    """Hash character 2-/3-grams of the input into a unit vector.

    Pure function of the text: stable across processes (keyed on blake2b,
    not Python's randomized ``hash``).
    """

    def __init__(self, dimension: int = 32) -> None:
        if dimension < 2:
            raise ValueError("dimension must be at least 2")
        self.dimension = dimension

    def embed(self, text: str) -> np.ndarray:
        if not text:
            raise EmptyText("cannot embed an empty string")
        marked = f"\x02{text}\x03"
        vec = np.zeros(self.dimension, dtype=np.float64)
        for n in (2, 3):
            for i in range(len(marked) - n + 1):
                digest = blake2b(
                    marked[i : i + n].encode("utf-8"), digest_size=8
                ).digest()
                h = int.from_bytes(digest, "big")
                vec[(h >> 1) % self.dimension] += 1.0 if h & 1 else -1.0
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:  # all n-gram contributions cancelled; keep output defined
            vec[0] = 1.0
            norm = 1.0
        out = vec / norm
        out.setflags(write=False)
        return out


class RemoteEmbedder:
    """HTTP+JSON embedder: request {"input": text} -> {"embedding": [...]}."""

    def __init__(self, endpoint: str, dimension: int, timeout: float = 10.0) -> None:
        self.endpoint = endpoint
        self.dimension = dimension
        self.timeout = timeout

    def embed(self, text: str) -> np.ndarray:
        if not text:
            raise EmptyText("cannot embed an empty string")
        payload = json.dumps({"input": text}).encode("utf-8")
        request = urllib.request.Request(
            self.endpoint, data=payload, headers={"Content-Type": "application/json"}
        )
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as response:
                body = json.loads(response.read().decode("utf-8"))
        except (urllib.error.URLError, OSError, ValueError) as exc:
            raise RemoteUnavailable(f"embedder at {self.endpoint}: {exc}") from exc
        try:
            vec = np.array(body["embedding"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise RemoteUnavailable(f"embedder returned malformed payload: {exc}") from exc
        if vec.shape != (self.dimension,):
            raise DimensionMismatch(
                f"remote embedding has shape {vec.shape}, expected ({self.dimension},)"
            )
        norm = float(np.linalg.norm(vec))
        if norm > 0:
            vec = vec / norm
        vec.setflags(write=False)
        return vec


def build_embedder(kind: str, dimension: int, endpoint: str | None = None) -> Embedder:
    if kind == "deterministic":
        return DeterministicEmbedder(dimension)
    if kind == "remote":
        if not endpoint:
            raise ValueError("remote embedder needs an endpoint")
        return RemoteEmbedder(endpoint, dimension)
    raise ValueError(f"unknown embedder kind {kind!r}")


def cosine(x: np.ndarray, y: np.ndarray) -> float:
    """Dot product of unit vectors; stays within [-1, 1] up to rounding."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise DimensionMismatch(f"cosine over shapes {x.shape} and {y.shape}")
    return float(np.dot(x, y))


@dataclass(frozen=True)
class RetrievalConfig:
    k_user: int = 10
    k_cross: int = 10
    threshold: float = DEFAULT_SIMILARITY_THRESHOLD

    def __post_init__(self) -> None:
        if self.k_user < 0 or self.k_cross < 0:
            raise ValueError("tier sizes must be non-negative")
        if not (-1.0 <= self.threshold <= 1.0):
            raise ValueError("threshold must lie in [-1, 1]")


@dataclass(frozen=True)
class RankedFragment:
    """One retrieval hit as presented to a reader: content plus score,
    no provenance beyond the tier tag and creation tick."""

    fragment_id: str
    similarity: float
    tier: Tier
    key: str
    value: str
    created_at: int


def _rank(candidates: list[RankedFragment], k: int) -> list[RankedFragment]:
    ordered = sorted(
        candidates, key=lambda c: (-c.similarity, -c.created_at, c.fragment_id)
    )
    return ordered[:k]


def retrieve(
    store: MemoryStore,
    timeline: AccessTimeline,
    u: PrincipalId,
    a: PrincipalId,
    t: int,
    query_embedding: np.ndarray,
    config: RetrievalConfig,
) -> tuple[list[RankedFragment], list[RankedFragment]]:
    """Two-tier top-k retrieval for reader (u, a, t).

    Returns ``(user_tier, cross_tier)``: the reader's own private fragments
    and the shared pool, each filtered to admissible fragments created at or
    before ``t`` with similarity >= threshold, sorted by (similarity desc,
    created_at desc, id asc), and truncated to the configured tier size.
    """
    query = np.asarray(query_embedding, dtype=np.float64)
    if query.shape != (store.dimension,):
        raise DimensionMismatch(
            f"query embedding shape {query.shape}, store dimension {store.dimension}"
        )
    admitted = store.admissible(timeline, u, a, t)
    user_tier: list[RankedFragment] = []
    cross_tier: list[RankedFragment] = []
    for fragment in store.fragments():
        if fragment.id not in admitted or fragment.provenance.created_at > t:
            continue
        similarity = float(np.dot(query, fragment.embedding))
        if similarity < config.threshold:
            continue
        hit = RankedFragment(
            fragment_id=fragment.id,
            similarity=similarity,
            tier=fragment.tier,
            key=fragment.key,
            value=fragment.value,
            created_at=fragment.provenance.created_at,
        )
        if fragment.tier is Tier.PRIVATE:
            user_tier.append(hit)  # admissibility already pins creator == u
        else:
            cross_tier.append(hit)
    return _rank(user_tier, config.k_user), _rank(cross_tier, config.k_cross)
