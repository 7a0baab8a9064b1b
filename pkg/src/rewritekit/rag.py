"""End-to-end rewrite / retrieve / generate orchestration with stage timing.

The generator used for scoring is deliberately boring: an extractive picker
that returns the retrieved sentence with the highest unigram F1 overlap
against the rewritten query.  That keeps end-to-end runs deterministic and
testable; an LLM-provider hook is available for realistic runs.
"""

from __future__ import annotations

import json
import re
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from .data import (
    Corpus,
    DanglingReferenceError,
    DatasetError,
    Document,
    QueryRecord,
    resolve_positive,
)
from .metrics import MetricReport, score_corpus, tokenize
from .retrieval import FlatIndex, mrr_at_k, search
from .seq2seq import TinySeq2Seq, load_checkpoint, serialize_rewrite_input

Generator = Callable[[str, list[Document]], str]

_SENTENCE_RE = re.compile(r"(?<=[.!?])\s+")


def split_sentences(text: str) -> list[str]:
    return [s.strip() for s in _SENTENCE_RE.split(text) if s.strip()]


def _unigram_f1(candidate_tokens: set[str], reference_tokens: set[str]) -> float:
    if not candidate_tokens or not reference_tokens:
        return 0.0
    overlap = len(candidate_tokens & reference_tokens)
    if overlap == 0:
        return 0.0
    p = overlap / len(candidate_tokens)
    r = overlap / len(reference_tokens)
    return 2.0 * p * r / (p + r)


def extractive_generate(rewrite: str, docs: Sequence[Document]) -> str:
    """The sentence across docs with the best unigram F1 against the rewrite.

    Ties go to the earliest sentence of the highest-ranked document.  All-empty
    documents produce an empty answer.
    """
    query_tokens = set(tokenize(rewrite))
    best_sentence = ""
    best_score = -1.0
    for doc in docs:
        for sentence in split_sentences(doc_body_text(doc)):
            score = _unigram_f1(set(tokenize(sentence)), query_tokens)
            if score > best_score:
                best_score = score
                best_sentence = sentence
    return best_sentence


def doc_body_text(doc: Document) -> str:
    return f"{doc.title}. {doc.body}" if doc.title else doc.body


def llm_generator(provider, max_docs: int = 5) -> Generator:
    """Adapter turning a completion provider into a (rewrite, docs) generator."""

    def _generate(rewrite: str, docs: Sequence[Document]) -> str:
        context = "\n\n".join(doc_body_text(d) for d in docs[:max_docs])
        prompt = (
            "Answer the question using only the context.\n\n"
            f"Context:\n{context}\n\nQuestion: {rewrite}\n\nAnswer:"
        )
        return provider.complete(prompt).strip()

    return _generate


# -- rewriter resolution --

REWRITER_KINDS = ("none_raw", "manual", "fixed_variant", "model")


@dataclass(frozen=True)
class RewriterSpec:
    """Which rewrite feeds retrieval: the raw query, a stored variant, or a model."""

    kind: str
    variant: str | None = None
    checkpoint: str | None = None

    def __post_init__(self):
        if self.kind not in REWRITER_KINDS:
            raise ValueError(f"unknown rewriter kind {self.kind!r}")
        if self.kind == "fixed_variant" and not self.variant:
            raise ValueError("fixed_variant requires a variant name")
        if self.kind == "model" and not self.checkpoint:
            raise ValueError("model rewriter requires a checkpoint path")

    @classmethod
    def parse(cls, text: str) -> "RewriterSpec":
        """Forms: "none_raw", "manual", "variant:NAME", "model:PATH"."""
        if text in ("none_raw", "manual"):
            return cls(kind=text)
        if text.startswith("variant:"):
            return cls(kind="fixed_variant", variant=text.split(":", 1)[1])
        if text.startswith("model:"):
            return cls(kind="model", checkpoint=text.split(":", 1)[1])
        raise ValueError(f"cannot parse rewriter spec {text!r}")

    @property
    def label(self) -> str:
        if self.kind == "fixed_variant":
            return self.variant
        if self.kind == "model":
            return "model"
        return {"none_raw": "raw", "manual": "manual"}[self.kind]


def resolve_rewriter(spec: RewriterSpec, model: TinySeq2Seq | None = None, max_len: int = 32):
    """A callable record -> rewrite text for the given spec.

    A preloaded model takes precedence over the checkpoint path, so tests and
    in-process pipelines avoid a disk round-trip.
    """
    if spec.kind == "none_raw":
        return lambda record: record.query
    if spec.kind == "manual":
        return lambda record: record.rewrite("manual")
    if spec.kind == "fixed_variant":
        variant = spec.variant
        return lambda record: record.rewrite(variant)
    if model is None:
        model = load_checkpoint(spec.checkpoint)
    return lambda record: model.rewrite_text(serialize_rewrite_input(record), max_len=max_len)


# -- run configuration and report --


@dataclass(frozen=True)
class RagConfig:
    rewriter: RewriterSpec
    k: int = 5
    max_len: int = 32

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")


@dataclass(frozen=True)
class RecordOutput:
    record_id: str
    rewrite: str
    doc_ids: tuple[str, ...]
    answer: str
    gold_rank: int
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "record_id": self.record_id,
            "rewrite": self.rewrite,
            "doc_ids": list(self.doc_ids),
            "answer": self.answer,
            "gold_rank": self.gold_rank,
            "error": self.error,
        }


STAGES = ("rewrite", "retrieve", "generate")


@dataclass
class RagReport:
    label: str
    k: int
    n_records: int
    n_failed: int
    outputs: list[RecordOutput] = field(default_factory=list)
    metrics: MetricReport | None = None
    mrr: float | None = None
    stage_seconds: dict[str, float] | None = None

    def stage_fractions(self) -> dict[str, float] | None:
        if self.stage_seconds is None:
            return None
        total = sum(self.stage_seconds.values())
        if total <= 0:
            return None
        return {stage: self.stage_seconds[stage] / total for stage in STAGES}

    def to_dict(self, include_timing: bool = True) -> dict:
        out = {
            "label": self.label,
            "k": self.k,
            "n_records": self.n_records,
            "n_failed": self.n_failed,
            "mrr": self.mrr,
            "metrics": self.metrics.to_dict() if self.metrics else None,
            "outputs": [o.to_dict() for o in self.outputs],
        }
        if include_timing:
            fractions = self.stage_fractions()
            out["timing"] = {
                "mean_seconds": (
                    {s: self.stage_seconds[s] / self.n_records for s in STAGES}
                    if self.stage_seconds and self.n_records
                    else None
                ),
                "fractions": fractions,
            }
        return out

    def to_json(self, include_timing: bool = True, indent: int = 2) -> str:
        return json.dumps(
            self.to_dict(include_timing=include_timing),
            indent=indent,
            ensure_ascii=False,
        )


def run_rag(
    records: Sequence[QueryRecord],
    corpus: Corpus,
    index: FlatIndex,
    provider,
    config: RagConfig,
    generator: Generator = extractive_generate,
    model: TinySeq2Seq | None = None,
) -> RagReport:
    """Rewrite, retrieve, and generate per record, timing each stage.

    A failing stage marks just that record as failed; the run continues and
    failures are counted in the report.
    """
    rewriter = resolve_rewriter(config.rewriter, model=model, max_len=config.max_len)
    if not records:
        return RagReport(label=config.rewriter.label, k=config.k, n_records=0, n_failed=0)

    outputs: list[RecordOutput] = []
    stage_seconds = {stage: 0.0 for stage in STAGES}
    for record in records:
        rewrite_text = ""
        doc_ids: tuple[str, ...] = ()
        answer = ""
        gold_rank = 0
        error = None
        try:
            t0 = time.perf_counter()
            rewrite_text = rewriter(record)
            t1 = time.perf_counter()
            stage_seconds["rewrite"] += t1 - t0
            vector = provider.embed(rewrite_text)
            result = search(index, vector, config.k, query_id=record.record_id)
            t2 = time.perf_counter()
            stage_seconds["retrieve"] += t2 - t1
            doc_ids = tuple(doc_id for doc_id, _ in result.ranked)
            docs = [d for d in (corpus.get(i) for i in doc_ids) if d is not None]
            answer = generator(rewrite_text, docs)
            stage_seconds["generate"] += time.perf_counter() - t2
            if record.pos_doc_id is not None:
                gold_rank = result.rank_of(record.pos_doc_id)
        except Exception as exc:
            error = str(exc) or type(exc).__name__
        outputs.append(
            RecordOutput(
                record_id=record.record_id,
                rewrite=rewrite_text,
                doc_ids=doc_ids,
                answer=answer,
                gold_rank=gold_rank,
                error=error,
            )
        )

    ok = [o for o in outputs if o.error is None]
    by_id = {r.record_id: r for r in records}
    metrics = None
    if ok:
        metrics = score_corpus(
            [o.answer for o in ok], [by_id[o.record_id].gold_answer for o in ok]
        )
    labelled = [o for o in ok if by_id[o.record_id].pos_doc_id is not None]
    mrr = None
    if labelled:
        total = sum(1.0 / o.gold_rank for o in labelled if 0 < o.gold_rank <= config.k)
        mrr = 100.0 * total / len(labelled)
    return RagReport(
        label=config.rewriter.label,
        k=config.k,
        n_records=len(records),
        n_failed=len(outputs) - len(ok),
        outputs=outputs,
        metrics=metrics,
        mrr=mrr,
        stage_seconds=stage_seconds,
    )


@dataclass(frozen=True)
class GoldDocReport:
    metrics: MetricReport
    n_records: int
    n_failed: int


def eval_gold_docs(
    records: Sequence[QueryRecord],
    variant: str,
    corpus: Corpus,
    generator: Generator = extractive_generate,
) -> GoldDocReport:
    """Generation metrics with the gold document as the only context.

    Isolates rewrite quality from retrieval.  A dangling pos_doc_id fails that
    record only.
    """
    predictions = []
    references = []
    n_failed = 0
    for record in records:
        rewrite_text = record.rewrite(variant)
        try:
            doc = resolve_positive(record, corpus)
        except DanglingReferenceError:
            n_failed += 1
            continue
        predictions.append(generator(rewrite_text, [doc]))
        references.append(record.gold_answer)
    if not predictions:
        raise DatasetError("no records with resolvable gold documents")
    return GoldDocReport(
        metrics=score_corpus(predictions, references),
        n_records=len(records),
        n_failed=n_failed,
    )


# -- report rendering --

_TABLE_COLUMNS = ("MRR@k", "EM", "ROUGE-1", "ROUGE-2", "ROUGE-L", "BLEU-4")


def _metric_row(report: RagReport) -> list[str]:
    m = report.metrics
    values = [
        report.mrr,
        m.em if m else None,
        m.rouge1 if m else None,
        m.rouge2 if m else None,
        m.rougeL if m else None,
        m.bleu4 if m else None,
    ]
    return [f"{v:.2f}" if v is not None else "-" for v in values]


def comparison_table(reports: Sequence[RagReport], fmt: str = "md") -> str:
    """Method-by-metrics table over several runs (one row per rewriter)."""
    if fmt == "json":
        return json.dumps(
            [r.to_dict(include_timing=False) for r in reports], indent=2, ensure_ascii=False
        )
    header = ["method", *_TABLE_COLUMNS]
    rows = [[r.label, *_metric_row(r)] for r in reports]
    if fmt == "csv":
        lines = [",".join(header)]
        lines.extend(",".join(row) for row in rows)
        return "\n".join(lines) + "\n"
    if fmt == "md":
        lines = ["| " + " | ".join(header) + " |"]
        lines.append("|" + "|".join(" --- " for _ in header) + "|")
        lines.extend("| " + " | ".join(row) + " |" for row in rows)
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown report format {fmt!r}")


def render_report(report: RagReport, fmt: str = "json", include_timing: bool = True) -> str:
    if fmt == "json":
        return report.to_json(include_timing=include_timing) + "\n"
    if fmt in ("md", "csv"):
        text = comparison_table([report], fmt=fmt)
        if include_timing and report.stage_seconds and report.n_records:
            fractions = report.stage_fractions()
            timing = ", ".join(f"{s}: {fractions[s]:.1%}" for s in STAGES)
            mean_total = sum(report.stage_seconds.values()) / report.n_records
            if fmt == "md":
                text += f"\nMean time per record: {mean_total:.4f}s ({timing})\n"
        return text
    raise ValueError(f"unknown report format {fmt!r}")


def write_report(report: RagReport, path: str | Path, fmt: str = "json") -> None:
    Path(path).write_text(render_report(report, fmt=fmt), encoding="utf-8")


def report_from_dict(obj: dict) -> RagReport:
    """Rebuild a RagReport from its JSON form (timing is not restored)."""
    metrics = MetricReport(**obj["metrics"]) if obj.get("metrics") else None
    outputs = [
        RecordOutput(
            record_id=o["record_id"],
            rewrite=o["rewrite"],
            doc_ids=tuple(o["doc_ids"]),
            answer=o["answer"],
            gold_rank=o["gold_rank"],
            error=o.get("error"),
        )
        for o in obj.get("outputs", [])
    ]
    return RagReport(
        label=obj["label"],
        k=obj["k"],
        n_records=obj["n_records"],
        n_failed=obj["n_failed"],
        outputs=outputs,
        metrics=metrics,
        mrr=obj.get("mrr"),
    )


def load_report(path: str | Path) -> RagReport:
    return report_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
