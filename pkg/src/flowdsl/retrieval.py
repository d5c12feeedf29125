"""Embeddings, exact cosine search, few-shot selection, and TST pairs.

Few-shot selection embeds every training prompt once into a flat index
and answers queries with an exact top-k cosine scan (corpora here are
small enough that approximate search buys nothing and costs test
determinism).

TST (target similarity tuning) support has two halves: generating
labeled training pairs from a corpus, where a pair is positive when the
prompts' embedding cosine exceeds 0.7 and its regression target is the
Jaccard similarity of the two gold programs, and scoring any candidate
similarity function against those targets with a mean squared error.
Training an embedder is out of scope; any embedder can be evaluated.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import os
import threading
from dataclasses import dataclass
from typing import Callable, Iterable, Protocol

import numpy as np

from .metrics import jaccard_program_similarity
from .samples import Sample

INDEX_FORMAT_VERSION = 1


class Embedder(Protocol):
    """Deterministic text-to-vector map of fixed dimension."""

    name: str
    dimension: int

    def embed(self, text: str) -> np.ndarray: ...

    def embed_many(self, texts: list[str]) -> list[np.ndarray]: ...


def normalize(vector: np.ndarray) -> np.ndarray:
    """Scale to unit L2 norm.  A zero vector has no direction: error."""
    arr = np.asarray(vector, dtype=np.float64)
    norm = float(np.linalg.norm(arr))
    if norm == 0.0:
        raise ValueError("cannot normalize a zero vector")
    return arr / norm


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.dot(normalize(a), normalize(b)))


def _ensure_unit(vector: np.ndarray) -> np.ndarray:
    """Normalize, but keep an already-unit vector bitwise unchanged so
    that build/save/load round-trips never perturb stored scores."""
    arr = np.asarray(vector, dtype=np.float64)
    norm = float(np.linalg.norm(arr))
    if norm == 0.0:
        raise ValueError("cannot normalize a zero vector")
    if abs(norm - 1.0) <= 1e-9:
        return arr
    return arr / norm


class HashEmbedder:
    """Offline test embedder: hash tokens into buckets, count, normalize.

    Tokens are casefolded whitespace splits; each token lands in a bucket
    chosen by a stable md5-based hash (Python's builtin hash() is salted
    per process and would break determinism).  Texts sharing many tokens
    get high cosine; disjoint texts usually score near 0.
    """

    def __init__(self, dimension: int = 64, name: str = "hash-embedder"):
        if dimension <= 0:
            raise ValueError("dimension must be positive")
        self.dimension = dimension
        self.name = name

    def _bucket(self, token: str) -> int:
        digest = hashlib.md5(token.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "big") % self.dimension

    def embed(self, text: str) -> np.ndarray:
        tokens = text.casefold().split()
        if not tokens:
            raise ValueError("cannot embed empty text")
        counts = np.zeros(self.dimension, dtype=np.float64)
        for token in tokens:
            counts[self._bucket(token)] += 1.0
        return normalize(counts)

    def embed_many(self, texts: list[str]) -> list[np.ndarray]:
        return [self.embed(t) for t in texts]


# ---------------------------------------------------------------------------
# Exact flat index


class SampleIndex:
    """Immutable flat index of normalized vectors keyed by sample id."""

    def __init__(self, ids: list[str], vectors: list[np.ndarray], name: str = ""):
        if len(ids) != len(vectors):
            raise ValueError("ids and vectors must have equal length")
        if len(set(ids)) != len(ids):
            raise ValueError("sample ids must be unique")
        self.ids = list(ids)
        self.name = name
        if vectors:
            dims = {v.shape for v in vectors}
            if len(dims) != 1:
                raise ValueError(f"inconsistent vector dimensions: {sorted(dims)}")
            self.matrix = np.vstack([_ensure_unit(v) for v in vectors])
            self.dimension = self.matrix.shape[1]
        else:
            self.matrix = np.zeros((0, 0), dtype=np.float64)
            self.dimension = 0

    def __len__(self) -> int:
        return len(self.ids)

    def query(self, vector: np.ndarray, k: int) -> list[tuple[str, float]]:
        """Top-k ids by cosine, descending; ties keep insertion order.

        The vector must already be unit length (embedders return unit
        vectors); renormalizing here would perturb scores by an ulp and
        scramble exact ties.
        """
        if k <= 0 or not self.ids:
            return []
        vector = np.asarray(vector, dtype=np.float64)
        if abs(float(np.linalg.norm(vector)) - 1.0) > 1e-6:
            raise ValueError("query vector must be unit length")
        scores = self.matrix @ vector
        # Stable sort on the negated scores: equal scores keep index order.
        order = np.argsort(-scores, kind="stable")[:k]
        return [(self.ids[i], float(scores[i])) for i in order]

    def to_dict(self) -> dict:
        return {
            "format_version": INDEX_FORMAT_VERSION,
            "name": self.name,
            "dimension": self.dimension,
            "ids": self.ids,
            "vectors": [[float(x) for x in row] for row in self.matrix],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SampleIndex":
        version = data.get("format_version")
        if version != INDEX_FORMAT_VERSION:
            raise ValueError(f"unsupported index format_version: {version!r}")
        vectors = [np.asarray(row, dtype=np.float64) for row in data["vectors"]]
        index = cls(ids=list(data["ids"]), vectors=vectors, name=data.get("name", ""))
        if vectors and index.dimension != data["dimension"]:
            raise ValueError("index dimension field disagrees with vectors")
        return index

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(self.to_dict(), handle)

    @classmethod
    def load(cls, path: str) -> "SampleIndex":
        with open(path, encoding="utf-8") as handle:
            return cls.from_dict(json.load(handle))


def build_index(samples: Iterable[Sample], embedder: Embedder, name: str = "") -> SampleIndex:
    """Index every sample's prompt embedding, in input order."""
    samples = list(samples)
    ids = [s.id for s in samples]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate sample ids in index input")
    vectors = embedder.embed_many([s.prompt for s in samples])
    for vec in vectors:
        if vec.shape != (embedder.dimension,):
            raise ValueError(
                f"embedder returned dimension {vec.shape}, expected ({embedder.dimension},)"
            )
    return SampleIndex(ids=ids, vectors=vectors, name=name or embedder.name)


def retrieve_few_shots(
    index: SampleIndex, query: str, k: int, embedder: Embedder
) -> list[tuple[str, float]]:
    if k < 0:
        raise ValueError("k must be >= 0")
    if k == 0:
        return []
    return index.query(embedder.embed(query), k)


# ---------------------------------------------------------------------------
# TST pairs and loss

TST_THRESHOLD_DEFAULT = 0.7


@dataclass
class TstPair:
    """One labeled training pair for target similarity tuning.

    The pair carries both prompts so a candidate similarity function can
    be scored without access to the original corpus.
    """

    id_i: str
    id_j: str
    prompt_i: str
    prompt_j: str
    utterance_similarity: float
    program_similarity: float
    label: str  # "positive" | "negative"

    def __post_init__(self):
        if self.label not in ("positive", "negative"):
            raise ValueError(f"label must be positive|negative, got {self.label!r}")
        if not 0.0 <= self.program_similarity <= 1.0:
            raise ValueError(f"program_similarity out of range: {self.program_similarity}")

    def to_dict(self) -> dict:
        return {
            "id_i": self.id_i,
            "id_j": self.id_j,
            "prompt_i": self.prompt_i,
            "prompt_j": self.prompt_j,
            "utterance_similarity": self.utterance_similarity,
            "program_similarity": self.program_similarity,
            "label": self.label,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TstPair":
        return cls(
            id_i=data["id_i"],
            id_j=data["id_j"],
            prompt_i=data["prompt_i"],
            prompt_j=data["prompt_j"],
            utterance_similarity=data["utterance_similarity"],
            program_similarity=data["program_similarity"],
            label=data["label"],
        )


def generate_tst_pairs(
    samples: list[Sample],
    embedder: Embedder,
    threshold: float = TST_THRESHOLD_DEFAULT,
    budget: int | None = None,
) -> list[TstPair]:
    """Enumerate unordered sample pairs, label by prompt cosine vs the
    threshold (strictly greater is positive), target by program Jaccard.

    Pairs come out in lexicographic id order regardless of input order,
    truncated to ``budget`` when given.  Gold flows must parse.
    """
    if budget is not None and budget < 0:
        raise ValueError("budget must be >= 0")
    ordered = sorted(samples, key=lambda s: s.id)
    ids = [s.id for s in ordered]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate sample ids")
    vectors = {s.id: embedder.embed(s.prompt) for s in ordered}
    flows = {s.id: s.flow for s in ordered}  # raises ParseError on bad gold
    pairs: list[TstPair] = []
    for a, b in itertools.combinations(ordered, 2):
        if budget is not None and len(pairs) >= budget:
            break
        utterance = float(np.dot(vectors[a.id], vectors[b.id]))
        program = jaccard_program_similarity(flows[a.id], flows[b.id])
        pairs.append(TstPair(
            id_i=a.id,
            id_j=b.id,
            prompt_i=a.prompt,
            prompt_j=b.prompt,
            utterance_similarity=utterance,
            program_similarity=program,
            label="positive" if utterance > threshold else "negative",
        ))
    return pairs


def tst_loss(
    pairs: list[TstPair], candidate_similarity: Callable[[str, str], float]
) -> float:
    """Mean squared error between the candidate's prompt similarity and
    the program-similarity target, over all pairs."""
    if not pairs:
        raise ValueError("tst_loss needs at least one pair")
    total = 0.0
    for pair in pairs:
        predicted = candidate_similarity(pair.prompt_i, pair.prompt_j)
        total += (predicted - pair.program_similarity) ** 2
    return total / len(pairs)


def embedder_similarity(embedder: Embedder) -> Callable[[str, str], float]:
    """Adapt an embedder into the (text, text) -> cosine candidate shape
    used by tst_loss."""

    def fn(a: str, b: str) -> float:
        return float(np.dot(embedder.embed(a), embedder.embed(b)))

    return fn


# ---------------------------------------------------------------------------
# HTTP embedding client


class EmbeddingServiceError(Exception):
    pass


class HttpEmbedder:
    """Client for an order-preserving batch embedding endpoint.

    Request: {"model": name, "input": [texts]}.  Response: {"data":
    [{"embedding": [...]}, ...]} in input order.  URL comes from
    ``FLOWDSL_EMBEDDING_URL``, auth from ``FLOWDSL_EMBEDDING_API_KEY``.
    Results are cached per text; the cache lock makes the client safe to
    share across threads.
    """

    def __init__(
        self,
        url: str | None = None,
        model: str = "default-embedding",
        dimension: int = 0,
        api_key: str | None = None,
        transport=None,
    ):
        import httpx

        self.url = url or os.environ.get("FLOWDSL_EMBEDDING_URL", "")
        if not self.url:
            raise EmbeddingServiceError(
                "no embedding endpoint: pass url= or set FLOWDSL_EMBEDDING_URL"
            )
        self.name = model
        self.dimension = dimension  # 0 = learn from first response
        api_key = api_key or os.environ.get("FLOWDSL_EMBEDDING_API_KEY", "")
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = httpx.Client(headers=headers, transport=transport, timeout=30.0)
        self._cache: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    def embed(self, text: str) -> np.ndarray:
        return self.embed_many([text])[0]

    def embed_many(self, texts: list[str]) -> list[np.ndarray]:
        with self._lock:
            missing = [t for t in texts if t not in self._cache]
        if missing:
            fetched = self._fetch(missing)
            with self._lock:
                self._cache.update(zip(missing, fetched))
        with self._lock:
            return [self._cache[t] for t in texts]

    def _fetch(self, texts: list[str]) -> list[np.ndarray]:
        import httpx

        try:
            response = self._client.post(
                self.url, json={"model": self.name, "input": texts}
            )
        except httpx.HTTPError as exc:
            raise EmbeddingServiceError(f"embedding request failed: {exc}") from exc
        if response.status_code != 200:
            raise EmbeddingServiceError(
                f"embedding endpoint returned {response.status_code}: {response.text[:200]}"
            )
        payload = response.json()
        rows = payload.get("data")
        if not isinstance(rows, list) or len(rows) != len(texts):
            raise EmbeddingServiceError(
                f"embedding response has {len(rows) if isinstance(rows, list) else 'no'} "
                f"rows for {len(texts)} inputs"
            )
        vectors = []
        for row in rows:
            vec = normalize(np.asarray(row["embedding"], dtype=np.float64))
            if self.dimension == 0:
                self.dimension = vec.shape[0]
            elif vec.shape[0] != self.dimension:
                raise EmbeddingServiceError(
                    f"embedding dimension drifted: {vec.shape[0]} != {self.dimension}"
                )
            vectors.append(vec)
        return vectors
