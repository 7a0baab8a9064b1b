"""Canonical record types and JSONL ingestion for dialogues, corpora, and entity files.

All exchange happens through JSONL (one UTF-8 JSON object per line).  Dialogue
history is stored most-recent-first: ``history[0]`` is the turn immediately
before the current query, ``history[-1]`` is the opening turn.  Serializers
preserve that order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator

RAW_VARIANT = "raw"
ENTITY_FIELDS = ("query_rewrite", "history", "doc_and_answer")
DATASET_SCHEMAS = ("dialogues", "corpus", "entities")


class DatasetError(ValueError):
    """An input file violated the JSONL schema (message carries file:line)."""


class DanglingReferenceError(LookupError):
    """A record points at a document id that is not present in the corpus."""


@dataclass(frozen=True)
class DialogueTurn:
    """One past question/answer exchange."""

    question: str
    answer: str


@dataclass(frozen=True)
class QueryRecord:
    """One dialogue turn to rewrite, with its history and gold labels.

    ``rewrites`` maps variant names (``raw``, ``manual``, ``syn_unseen``,
    ``syn_seen``, ``model``, ...) to rewrite texts; ``raw`` always equals
    ``query``.  ``pos_doc_id`` may be None for datasets without gold passages;
    retrieval metrics skip such records.
    """

    record_id: str
    turn_index: int
    history: tuple[DialogueTurn, ...]
    query: str
    gold_answer: str
    pos_doc_id: str | None = None
    manual_rewrite: str | None = None
    rewrites: dict[str, str] = field(default_factory=dict)

    def rewrite(self, variant: str) -> str:
        if variant not in self.rewrites:
            raise DatasetError(
                f"record {self.record_id!r} has no rewrite variant {variant!r}"
            )
        return self.rewrites[variant]


@dataclass(frozen=True)
class Document:
    """One retrievable passage."""

    doc_id: str
    title: str
    body: str


@dataclass(frozen=True)
class EntityAnnotation:
    """Entity surface strings extracted from one field of one record."""

    record_id: str
    field: str
    entities: frozenset[str]


def make_record(
    record_id: str,
    history: Iterable[DialogueTurn | tuple[str, str]],
    query: str,
    gold_answer: str = "",
    pos_doc_id: str | None = None,
    manual_rewrite: str | None = None,
    rewrites: dict[str, str] | None = None,
) -> QueryRecord:
    """Build a QueryRecord with the raw/manual variants filled in."""
    turns = tuple(
        t if isinstance(t, DialogueTurn) else DialogueTurn(t[0], t[1]) for t in history
    )
    variants = dict(rewrites or {})
    variants[RAW_VARIANT] = query
    if manual_rewrite is not None:
        variants.setdefault("manual", manual_rewrite)
    return QueryRecord(
        record_id=record_id,
        turn_index=len(turns),
        history=turns,
        query=query,
        gold_answer=gold_answer,
        pos_doc_id=pos_doc_id,
        manual_rewrite=manual_rewrite,
        rewrites=variants,
    )


def with_rewrite(record: QueryRecord, variant: str, text: str) -> QueryRecord:
    """Return a copy of ``record`` with one rewrite variant set.

    The ``raw`` entry can never be overwritten with anything other than the
    query itself.
    """
    if variant == RAW_VARIANT and text != record.query:
        raise DatasetError(
            f"record {record.record_id!r}: the raw variant must equal the query"
        )
    variants = dict(record.rewrites)
    variants[variant] = text
    variants[RAW_VARIANT] = record.query
    return replace(record, rewrites=variants)


class Corpus:
    """Read-only document store with order-preserving iteration."""

    def __init__(self, documents: Iterable[Document] = ()):
        self._docs: dict[str, Document] = {}
        for doc in documents:
            if doc.doc_id in self._docs:
                raise DatasetError(f"duplicate doc_id {doc.doc_id!r}")
            self._docs[doc.doc_id] = doc

    def __len__(self) -> int:
        return len(self._docs)

    def __iter__(self) -> Iterator[Document]:
        return iter(self._docs.values())

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._docs

    def get(self, doc_id: str) -> Document | None:
        return self._docs.get(doc_id)

    @property
    def doc_ids(self) -> list[str]:
        return list(self._docs)


def resolve_positive(record: QueryRecord, corpus: Corpus) -> Document:
    """Look up the gold document for a record."""
    if record.pos_doc_id is None:
        raise DanglingReferenceError(
            f"record {record.record_id!r} carries no pos_doc_id"
        )
    doc = corpus.get(record.pos_doc_id)
    if doc is None:
        raise DanglingReferenceError(
            f"record {record.record_id!r}: unknown pos_doc_id {record.pos_doc_id!r}"
        )
    return doc


# -- JSONL ingestion --


def _require(obj: dict, key: str, kind: type, where: str):
    if key not in obj:
        raise DatasetError(f"{where}: missing required field {key!r}")
    value = obj[key]
    if not isinstance(value, kind):
        raise DatasetError(
            f"{where}: field {key!r} must be {kind.__name__}, got {type(value).__name__}"
        )
    return value


def _parse_dialogue(obj: dict, where: str) -> QueryRecord:
    record_id = _require(obj, "record_id", str, where)
    turn_index = _require(obj, "turn_index", int, where)
    if turn_index < 0:
        raise DatasetError(f"{where}: field 'turn_index' must be non-negative")
    raw_history = _require(obj, "history", list, where)
    turns = []
    for i, entry in enumerate(raw_history):
        if not isinstance(entry, dict):
            raise DatasetError(f"{where}: history[{i}] must be an object")
        question = _require(entry, "q", str, f"{where} history[{i}]")
        answer = _require(entry, "a", str, f"{where} history[{i}]")
        if not question:
            raise DatasetError(f"{where}: history[{i}] field 'q' must be non-empty")
        if not answer:
            raise DatasetError(
                f"{where}: history[{i}] field 'a' must be non-empty "
                "(only the current turn may be unanswered)"
            )
        turns.append(DialogueTurn(question, answer))
    if len(turns) != turn_index:
        raise DatasetError(
            f"{where}: field 'turn_index' is {turn_index} but history has {len(turns)} turns"
        )
    query = _require(obj, "query", str, where)
    if not query:
        raise DatasetError(f"{where}: field 'query' must be non-empty")
    gold_answer = _require(obj, "gold_answer", str, where)
    pos_doc_id = obj.get("pos_doc_id")
    if pos_doc_id is not None and not isinstance(pos_doc_id, str):
        raise DatasetError(f"{where}: field 'pos_doc_id' must be a string or null")
    manual = obj.get("manual_rewrite")
    if manual is not None and not isinstance(manual, str):
        raise DatasetError(f"{where}: field 'manual_rewrite' must be a string or null")
    rewrites = obj.get("rewrites", {})
    if not isinstance(rewrites, dict):
        raise DatasetError(f"{where}: field 'rewrites' must be an object")
    for name, text in rewrites.items():
        if not isinstance(text, str):
            raise DatasetError(f"{where}: rewrites[{name!r}] must be a string")
    variants = dict(rewrites)
    if variants.get(RAW_VARIANT, query) != query:
        raise DatasetError(f"{where}: rewrites['raw'] must equal field 'query'")
    variants[RAW_VARIANT] = query
    if manual is not None:
        variants.setdefault("manual", manual)
    return QueryRecord(
        record_id=record_id,
        turn_index=turn_index,
        history=tuple(turns),
        query=query,
        gold_answer=gold_answer,
        pos_doc_id=pos_doc_id,
        manual_rewrite=manual,
        rewrites=variants,
    )


def _parse_document(obj: dict, where: str) -> Document:
    doc_id = _require(obj, "doc_id", str, where)
    title = _require(obj, "title", str, where)
    body = _require(obj, "body", str, where)
    if not body:
        raise DatasetError(f"{where}: field 'body' must be non-empty")
    return Document(doc_id=doc_id, title=title, body=body)


def _parse_entity(obj: dict, where: str) -> EntityAnnotation:
    record_id = _require(obj, "record_id", str, where)
    fld = _require(obj, "field", str, where)
    if fld not in ENTITY_FIELDS:
        raise DatasetError(
            f"{where}: field 'field' must be one of {ENTITY_FIELDS}, got {fld!r}"
        )
    entities = _require(obj, "entities", list, where)
    cleaned = set()
    for i, ent in enumerate(entities):
        if not isinstance(ent, str) or not ent.strip():
            raise DatasetError(f"{where}: entities[{i}] must be a non-empty string")
        cleaned.add(ent.strip().lower())
    return EntityAnnotation(record_id=record_id, field=fld, entities=frozenset(cleaned))


def load_dataset(path: str | Path, schema: str) -> list:
    """Load and validate a JSONL file.

    ``schema`` selects the record type: ``dialogues`` -> QueryRecord,
    ``corpus`` -> Document, ``entities`` -> EntityAnnotation.  Entity files may
    start with a provenance header object (any object carrying a ``header``
    key), which is skipped.  Errors carry the offending line number.
    """
    if schema not in DATASET_SCHEMAS:
        raise ValueError(f"unknown schema {schema!r}, expected one of {DATASET_SCHEMAS}")
    path = Path(path)
    records = []
    seen_ids: set[str] = set()
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            where = f"{path.name}:{lineno}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{where}: malformed JSON: {exc.msg}") from exc
            if not isinstance(obj, dict):
                raise DatasetError(f"{where}: each line must be a JSON object")
            if schema == "entities" and "header" in obj:
                continue
            if schema == "dialogues":
                record = _parse_dialogue(obj, where)
                key = record.record_id
            elif schema == "corpus":
                record = _parse_document(obj, where)
                key = record.doc_id
            else:
                record = _parse_entity(obj, where)
                key = f"{record.record_id}/{record.field}"
            if key in seen_ids:
                raise DatasetError(f"{where}: duplicate id {key!r}")
            seen_ids.add(key)
            records.append(record)
    return records


def load_corpus(path: str | Path) -> Corpus:
    return Corpus(load_dataset(path, "corpus"))


# -- canonical serialization --


def record_to_dict(record) -> dict:
    """Canonical JSON dict for any of the three record types."""
    if isinstance(record, QueryRecord):
        return {
            "record_id": record.record_id,
            "turn_index": record.turn_index,
            "history": [{"q": t.question, "a": t.answer} for t in record.history],
            "query": record.query,
            "manual_rewrite": record.manual_rewrite,
            "pos_doc_id": record.pos_doc_id,
            "gold_answer": record.gold_answer,
            "rewrites": {k: record.rewrites[k] for k in sorted(record.rewrites)},
        }
    if isinstance(record, Document):
        return {"doc_id": record.doc_id, "title": record.title, "body": record.body}
    if isinstance(record, EntityAnnotation):
        return {
            "record_id": record.record_id,
            "field": record.field,
            "entities": sorted(record.entities),
        }
    raise TypeError(f"cannot serialize {type(record).__name__}")


def dumps_record(record) -> str:
    return json.dumps(record_to_dict(record), ensure_ascii=False, sort_keys=True)


def save_dataset(records: Iterable, path: str | Path) -> None:
    """Write records as canonical JSONL (stable bytes for identical records)."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(dumps_record(record) + "\n")
    tmp.replace(path)
