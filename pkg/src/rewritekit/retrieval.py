"""Embedding providers, an exact inner-product flat index, and MRR@k.

Two providers are supported: a hashed TF-IDF encoder fitted on the corpus
(signed feature hashing, unit L2 output) and precomputed embeddings imported
from disk for use with real dense encoders run offline.  The index is a full
scan over unit vectors, so results match FAISS IndexFlatIP semantics exactly,
with ties broken by ascending doc_id for determinism.
"""

from __future__ import annotations

import json
import logging
import struct
import zlib
from collections import Counter
from dataclasses import dataclass
from math import log
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .data import Corpus, DatasetError, Document, QueryRecord

logger = logging.getLogger(__name__)

DEFAULT_DIM = 512

_WORD_SEP = None  # str.split default: any whitespace


class EmptyTextError(ValueError):
    """Raised when a text has no tokens to embed."""


def _hash_tokens(text: str) -> list[str]:
    return [t for t in text.lower().split(_WORD_SEP) if t]


def _bucket(token: str, dim: int) -> int:
    return zlib.crc32(b"bucket\x00" + token.encode("utf-8")) % dim


def _sign(token: str) -> float:
    return 1.0 if zlib.crc32(b"sign\x00" + token.encode("utf-8")) & 1 == 0 else -1.0


def doc_text(doc: Document) -> str:
    """The text an index row is built from."""
    return f"{doc.title}\n{doc.body}" if doc.title else doc.body


class HashedTfidf:
    """Signed feature hashing weighted by tf-idf, output unit-normalized.

    Must be fitted on the document collection before embedding so that idf
    weights are available.  Hashing uses crc32 under two distinct salts: one
    picks the bucket, the other the sign, which debiases collisions.
    """

    kind = "hashed_tfidf"

    def __init__(self, dim: int = DEFAULT_DIM):
        if dim < 1:
            raise ValueError("dim must be positive")
        self.dim = dim
        self.n_docs = 0
        self.doc_freq: dict[str, int] = {}

    def fit(self, texts: Iterable[str]) -> "HashedTfidf":
        freq: Counter[str] = Counter()
        n = 0
        for text in texts:
            n += 1
            freq.update(set(_hash_tokens(text)))
        self.n_docs = n
        self.doc_freq = dict(freq)
        return self

    @property
    def fitted(self) -> bool:
        return self.n_docs > 0

    def _idf(self, token: str) -> float:
        df = self.doc_freq.get(token, 0)
        return log((1.0 + self.n_docs) / (1.0 + df)) + 1.0

    def embed(self, text: str) -> np.ndarray:
        if not self.fitted:
            raise ValueError("HashedTfidf must be fitted before embedding")
        tokens = _hash_tokens(text)
        if not tokens:
            raise EmptyTextError("text has no tokens to embed")
        vec = np.zeros(self.dim, dtype=np.float64)
        for token, tf in Counter(tokens).items():
            vec[_bucket(token, self.dim)] += _sign(token) * tf * self._idf(token)
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            raise EmptyTextError("all token weights cancelled to zero")
        return (vec / norm).astype(np.float32)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "dim": self.dim,
            "n_docs": self.n_docs,
            "doc_freq": self.doc_freq,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "HashedTfidf":
        provider = cls(dim=int(obj["dim"]))
        provider.n_docs = int(obj["n_docs"])
        provider.doc_freq = {str(k): int(v) for k, v in obj["doc_freq"].items()}
        return provider


# -- binary matrix persistence: 8-byte header (uint32 LE n, dim), then
#    row-major float32 data; ids live in a JSON manifest next to it. --

_HEADER = struct.Struct("<II")
MATRIX_FILE = "embeddings.bin"
MANIFEST_FILE = "manifest.json"


def _write_matrix(path: Path, matrix: np.ndarray) -> None:
    data = np.ascontiguousarray(matrix, dtype=np.float32)
    with path.open("wb") as fh:
        fh.write(_HEADER.pack(data.shape[0], data.shape[1]))
        fh.write(data.tobytes(order="C"))


def _read_matrix(path: Path) -> np.ndarray:
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise DatasetError(f"{path}: truncated embedding file")
    n, dim = _HEADER.unpack_from(raw)
    expected = _HEADER.size + 4 * n * dim
    if len(raw) != expected:
        raise DatasetError(
            f"{path}: expected {expected} bytes for {n}x{dim} float32, got {len(raw)}"
        )
    return np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(n, dim).copy()


def _check_unit_rows(matrix: np.ndarray, ids: Sequence[str], what: str) -> None:
    norms = np.linalg.norm(matrix.astype(np.float64), axis=1)
    bad = np.flatnonzero(np.abs(norms - 1.0) > 1e-6)
    if bad.size:
        i = int(bad[0])
        raise DatasetError(
            f"{what} row for {ids[i]!r} has norm {norms[i]:.8f}; rows must be unit vectors"
        )


@dataclass(frozen=True)
class PrecomputedEmbeddings:
    """Unit vectors produced offline, looked up by id."""

    ids: tuple[str, ...]
    matrix: np.ndarray

    def __post_init__(self):
        if len(self.ids) != self.matrix.shape[0]:
            raise DatasetError("id count does not match embedding row count")
        _check_unit_rows(self.matrix, self.ids, "embedding")
        object.__setattr__(self, "_row", {i: n for n, i in enumerate(self.ids)})

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[1])

    def embed(self, key: str) -> np.ndarray:
        try:
            return self.matrix[self._row[key]]
        except KeyError:
            raise DatasetError(f"no precomputed embedding for id {key!r}") from None

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        _write_matrix(directory / MATRIX_FILE, self.matrix)
        manifest = {"ids": list(self.ids), "dim": self.dim, "count": len(self.ids)}
        (directory / MANIFEST_FILE).write_text(
            json.dumps(manifest, ensure_ascii=False), encoding="utf-8"
        )

    @classmethod
    def load(cls, directory: str | Path) -> "PrecomputedEmbeddings":
        directory = Path(directory)
        manifest = json.loads((directory / MANIFEST_FILE).read_text(encoding="utf-8"))
        matrix = _read_matrix(directory / MATRIX_FILE)
        return cls(ids=tuple(manifest["ids"]), matrix=matrix)


class FlatIndex:
    """Exact inner-product index: one unit row per document, full-scan search."""

    def __init__(self, doc_ids: Sequence[str], matrix: np.ndarray):
        if len(doc_ids) != matrix.shape[0]:
            raise DatasetError("doc_id count does not match matrix row count")
        if matrix.shape[0] == 0:
            raise DatasetError("index must contain at least one document")
        _check_unit_rows(matrix, doc_ids, "index")
        self.doc_ids = tuple(doc_ids)
        self.matrix = np.ascontiguousarray(matrix, dtype=np.float32)
        self._id_array = np.array(self.doc_ids)

    def __len__(self) -> int:
        return len(self.doc_ids)

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[1])

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        _write_matrix(directory / MATRIX_FILE, self.matrix)
        manifest = {"ids": list(self.doc_ids), "dim": self.dim, "count": len(self)}
        (directory / MANIFEST_FILE).write_text(
            json.dumps(manifest, ensure_ascii=False), encoding="utf-8"
        )

    @classmethod
    def load(cls, directory: str | Path) -> "FlatIndex":
        directory = Path(directory)
        manifest = json.loads((directory / MANIFEST_FILE).read_text(encoding="utf-8"))
        matrix = _read_matrix(directory / MATRIX_FILE)
        return cls(doc_ids=tuple(manifest["ids"]), matrix=matrix)

    @classmethod
    def from_precomputed(cls, embeddings: PrecomputedEmbeddings) -> "FlatIndex":
        return cls(doc_ids=embeddings.ids, matrix=embeddings.matrix)


@dataclass(frozen=True)
class RetrievalResult:
    query_id: str
    k: int
    ranked: tuple[tuple[str, float], ...]

    def rank_of(self, doc_id: str) -> int:
        """1-based rank of doc_id within the returned list, 0 if absent."""
        for rank, (candidate, _) in enumerate(self.ranked, start=1):
            if candidate == doc_id:
                return rank
        return 0


def build_index(corpus: Corpus, provider) -> FlatIndex:
    """Embed every document in corpus order.

    A PrecomputedEmbeddings provider is keyed by doc_id; any other provider is
    called with the document text.
    """
    if len(corpus) == 0:
        raise DatasetError("cannot build an index from an empty corpus")
    rows = []
    for doc in corpus:
        try:
            if isinstance(provider, PrecomputedEmbeddings):
                rows.append(provider.embed(doc.doc_id))
            else:
                rows.append(provider.embed(doc_text(doc)))
        except Exception as exc:
            raise DatasetError(f"failed to embed document {doc.doc_id!r}: {exc}") from exc
    return FlatIndex(doc_ids=corpus.doc_ids, matrix=np.stack(rows))


def search(index: FlatIndex, query_vector: np.ndarray, k: int, query_id: str = "") -> RetrievalResult:
    """Exact top-k by inner product; ties broken by ascending doc_id.

    Asking for more documents than the index holds returns all of them ranked.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    q = np.asarray(query_vector, dtype=np.float32).reshape(-1)
    if q.shape[0] != index.dim:
        raise ValueError(f"query has dim {q.shape[0]}, index has dim {index.dim}")
    scores = index.matrix @ q
    order = np.lexsort((index._id_array, -scores))
    top = order[: min(k, len(index))]
    ranked = tuple((index.doc_ids[i], float(scores[i])) for i in top)
    return RetrievalResult(query_id=query_id, k=k, ranked=ranked)


def mrr_at_k(results: Iterable[RetrievalResult], gold: dict[str, str], k: int = 5) -> float:
    """Mean reciprocal rank as a percentage, rank cutoff at k.

    Results without a gold entry are skipped with a warning rather than
    failing the whole evaluation.
    """
    total = 0.0
    scored = 0
    for result in results:
        if result.query_id not in gold:
            logger.warning("no gold document for query %r; skipping", result.query_id)
            continue
        scored += 1
        gold_id = gold[result.query_id]
        for rank, (doc_id, _) in enumerate(result.ranked[:k], start=1):
            if doc_id == gold_id:
                total += 1.0 / rank
                break
    if scored == 0:
        raise ValueError("no queries with gold documents to score")
    return 100.0 * total / scored


@dataclass(frozen=True)
class RetrievalReport:
    variant: str
    k: int
    mrr: float
    n_queries: int
    n_skipped: int
    ranks: dict[str, int]

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "k": self.k,
            "mrr": self.mrr,
            "n_queries": self.n_queries,
            "n_skipped": self.n_skipped,
            "ranks": {qid: self.ranks[qid] for qid in sorted(self.ranks)},
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, ensure_ascii=False)


def evaluate_retrieval(
    records: Sequence[QueryRecord],
    variant: str,
    index: FlatIndex,
    provider,
    k: int = 5,
) -> RetrievalReport:
    """Embed one rewrite variant per record, search, and compute MRR@k.

    Records without a pos_doc_id carry no retrieval label and are skipped.
    A PrecomputedEmbeddings provider is keyed by record_id.
    """
    results = []
    gold: dict[str, str] = {}
    skipped = 0
    for record in records:
        if record.pos_doc_id is None:
            skipped += 1
            continue
        text = record.rewrite(variant)
        if isinstance(provider, PrecomputedEmbeddings):
            vector = provider.embed(record.record_id)
        else:
            vector = provider.embed(text)
        results.append(search(index, vector, k, query_id=record.record_id))
        gold[record.record_id] = record.pos_doc_id
    if not results:
        raise DatasetError("no records with pos_doc_id to evaluate")
    mrr = mrr_at_k(results, gold, k=k)
    ranks = {r.query_id: r.rank_of(gold[r.query_id]) for r in results}
    return RetrievalReport(
        variant=variant,
        k=k,
        mrr=mrr,
        n_queries=len(results),
        n_skipped=skipped,
        ranks=ranks,
    )
