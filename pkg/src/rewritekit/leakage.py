"""Entity-leakage auditing for rewritten queries.

For each record three entity sets are compared: the rewrite's entities, the
dialogue history's entities, and the entities of the gold document plus gold
answer ("docans").  With N = |query entities|, M = |query entities outside the
history| and K = |query entities outside the history but inside docans|, the
leakage rate is K/M (0 when M = 0) and the pure leakage rate is K/N (0 when
N = 0).  Entities found in neither the history nor docans (hallucinations)
inflate N and M only.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

from .data import Corpus, DatasetError, QueryRecord, load_dataset

# Function words that do not start an entity at sentence-initial position.
_STOPWORDS = frozenset(
    """a an the and or but if then is are was were be been am do does did has have
    had will would can could shall should may might must it its he she they them
    their his her this that these those there here what which who whom whose when
    where why how in on at of for to from with without by about into over under
    after before between during as not no nor so yet i we you my our your me us
    tell please let""".split()
)

_SCAN_RE = re.compile(r"[A-Za-z]+(?:'[A-Za-z]+)?|\d+|[.!?]")


def extract_entity_spans(text: str) -> list[str]:
    """Entity surfaces in order of appearance, original casing preserved.

    Builtin rule: maximal runs of capitalized tokens (a sentence-initial token
    only starts a run if it is not a stopword) plus standalone digit tokens.
    """
    spans: list[str] = []
    run: list[str] = []

    def flush():
        if run:
            spans.append(" ".join(run))
            run.clear()

    sentence_start = True
    for tok in _SCAN_RE.findall(text):
        if tok in (".", "!", "?"):
            flush()
            sentence_start = True
            continue
        if tok.isdigit():
            flush()
            spans.append(tok)
        elif tok[0].isupper() and not (sentence_start and tok.lower() in _STOPWORDS):
            run.append(tok)
        else:
            flush()
        sentence_start = False
    flush()
    return spans


def extract_entities(text: str) -> set[str]:
    """Lowercased entity set for a text, using the builtin rule."""
    return {span.lower() for span in extract_entity_spans(text)}


@dataclass(frozen=True)
class EntityExtractor:
    """Either the builtin rule or a sidecar entity file keyed by record id."""

    kind: str = "builtin_rules"
    sidecar_path: Path | None = None

    def __post_init__(self):
        if self.kind not in ("builtin_rules", "sidecar_file"):
            raise ValueError(f"unknown extractor kind {self.kind!r}")
        if self.kind == "sidecar_file" and self.sidecar_path is None:
            raise ValueError("sidecar_file extractor requires sidecar_path")


BUILTIN_EXTRACTOR = EntityExtractor()


def load_sidecar(path: str | Path) -> dict[tuple[str, str], set[str]]:
    """Load an entity JSONL file into a (record_id, field) -> entities map."""
    table: dict[tuple[str, str], set[str]] = {}
    for ann in load_dataset(path, "entities"):
        table[(ann.record_id, ann.field)] = set(ann.entities)
    return table


@dataclass(frozen=True)
class LeakageStats:
    """Per-record entity counts and leakage ratios."""

    record_id: str
    n_query_entities: int
    m_not_in_history: int
    k_solely_from_docans: int
    lr: float
    pure_lr: float

    def to_dict(self) -> dict:
        return {
            "record_id": self.record_id,
            "N": self.n_query_entities,
            "M": self.m_not_in_history,
            "K": self.k_solely_from_docans,
            "lr": self.lr,
            "pure_lr": self.pure_lr,
        }


def leakage_for_record(
    query_entities: set[str],
    history_entities: set[str],
    docans_entities: set[str],
    record_id: str = "",
) -> LeakageStats:
    """Count N, M, K over lowercased entity sets and form LR / PureLR."""
    n = len(query_entities)
    outside_history = query_entities - history_entities
    m = len(outside_history)
    k = len(outside_history & docans_entities)
    return LeakageStats(
        record_id=record_id,
        n_query_entities=n,
        m_not_in_history=m,
        k_solely_from_docans=k,
        lr=k / m if m > 0 else 0.0,
        pure_lr=k / n if n > 0 else 0.0,
    )


@dataclass(frozen=True)
class LeakageReport:
    variant: str
    avg_lr: float
    avg_pure_lr: float
    records: tuple[LeakageStats, ...]

    def to_json(self) -> str:
        payload = {
            "variant": self.variant,
            "avg_lr": self.avg_lr,
            "avg_pure_lr": self.avg_pure_lr,
            "records": [s.to_dict() for s in self.records],
        }
        return json.dumps(payload, ensure_ascii=False, sort_keys=True)


def _history_text(record: QueryRecord) -> str:
    return " . ".join(f"{t.question} . {t.answer}" for t in record.history)


def _docans_text(record: QueryRecord, corpus: Corpus | None) -> str:
    parts = []
    if corpus is not None and record.pos_doc_id is not None:
        doc = corpus.get(record.pos_doc_id)
        if doc is not None:
            parts.extend([doc.title, doc.body])
    parts.append(record.gold_answer)
    return " . ".join(p for p in parts if p)


def record_entity_sets(
    record: QueryRecord,
    variant: str,
    extractor: EntityExtractor = BUILTIN_EXTRACTOR,
    corpus: Corpus | None = None,
    sidecar: dict[tuple[str, str], set[str]] | None = None,
) -> tuple[set[str], set[str], set[str]]:
    """(query, history, docans) entity sets for one record and variant."""
    if extractor.kind == "builtin_rules":
        return (
            extract_entities(record.rewrite(variant)),
            extract_entities(_history_text(record)),
            extract_entities(_docans_text(record, corpus)),
        )
    assert sidecar is not None
    sets = []
    for fld in ("query_rewrite", "history", "doc_and_answer"):
        key = (record.record_id, fld)
        if key not in sidecar:
            raise DatasetError(
                f"sidecar {extractor.sidecar_path} has no {fld!r} entities "
                f"for record {record.record_id!r}"
            )
        sets.append(sidecar[key])
    return sets[0], sets[1], sets[2]


def dataset_leakage(
    records: list[QueryRecord],
    variant: str,
    extractor: EntityExtractor = BUILTIN_EXTRACTOR,
    corpus: Corpus | None = None,
) -> LeakageReport:
    """Unweighted mean LR / PureLR over all records for one rewrite variant.

    Records with pos_doc_id missing from the corpus fall back to the gold
    answer alone as the docans source.
    """
    missing = [r.record_id for r in records if variant not in r.rewrites]
    if missing:
        raise DatasetError(
            f"variant {variant!r} missing on records: {', '.join(missing)}"
        )
    sidecar = None
    if extractor.kind == "sidecar_file":
        sidecar = load_sidecar(extractor.sidecar_path)
    stats = []
    for record in records:
        q, h, d = record_entity_sets(record, variant, extractor, corpus, sidecar)
        stats.append(leakage_for_record(q, h, d, record_id=record.record_id))
    n = len(stats)
    avg_lr = sum(s.lr for s in stats) / n if n else 0.0
    avg_pure = sum(s.pure_lr for s in stats) / n if n else 0.0
    return LeakageReport(
        variant=variant, avg_lr=avg_lr, avg_pure_lr=avg_pure, records=tuple(stats)
    )
