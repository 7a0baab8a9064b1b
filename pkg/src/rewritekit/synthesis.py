"""Synthetic rewrite generation through an external completion provider.

Prompts are rendered from user-editable templates under two conditions:
``unseen`` (history and query only) and ``seen`` (additionally the gold
document and gold answer).  Provider calls run under bounded concurrency with
retry/backoff, and results are cached on disk keyed by record, condition,
template fingerprint, and provider id, so a warm rerun makes zero calls.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import re
import string
import threading
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable

import requests

from .data import Corpus, QueryRecord, resolve_positive
from .leakage import extract_entities, extract_entity_spans

logger = logging.getLogger(__name__)

CONDITIONS = ("unseen", "seen")

ENV_ENDPOINT = "REWRITEKIT_LLM_ENDPOINT"
ENV_API_KEY = "REWRITEKIT_LLM_API_KEY"
ENV_MODEL = "REWRITEKIT_LLM_MODEL"


@dataclass(frozen=True)
class PromptTemplate:
    """A rewrite prompt with {history}/{query} and, for seen, {pos_doc}/{answer}."""

    condition: str
    template_text: str

    def __post_init__(self):
        if self.condition not in CONDITIONS:
            raise ValueError(f"unknown condition {self.condition!r}")
        fields = {
            name
            for _, name, _, _ in string.Formatter().parse(self.template_text)
            if name
        }
        unknown = fields - {"history", "query", "pos_doc", "answer"}
        if unknown:
            raise ValueError(f"unknown placeholders: {sorted(unknown)}")
        if "query" not in fields:
            raise ValueError("template must contain the {query} placeholder")
        gold = {"pos_doc", "answer"}
        if self.condition == "unseen" and fields & gold:
            raise ValueError("unseen templates must not reference {pos_doc} or {answer}")
        if self.condition == "seen" and not gold <= fields:
            raise ValueError("seen templates must contain both {pos_doc} and {answer}")

    @property
    def fingerprint(self) -> str:
        return hashlib.sha256(self.template_text.encode("utf-8")).hexdigest()[:16]

    @classmethod
    def from_file(cls, condition: str, path: str | Path) -> "PromptTemplate":
        return cls(condition, Path(path).read_text(encoding="utf-8"))


def default_template(condition: str) -> PromptTemplate:
    """The template shipped with the package for a condition."""
    if condition not in CONDITIONS:
        raise ValueError(f"condition must be one of {CONDITIONS}, got {condition!r}")
    text = (
        resources.files("rewritekit")
        .joinpath(f"templates/{condition}.txt")
        .read_text(encoding="utf-8")
    )
    return PromptTemplate(condition, text)


def _history_block(record: QueryRecord) -> str:
    return "\n".join(f"Q: {t.question}\nA: {t.answer}" for t in record.history)


def render_prompt(
    record: QueryRecord,
    condition: str,
    corpus: Corpus | None = None,
    template: PromptTemplate | None = None,
) -> str:
    """Deterministic prompt text for one record under one condition."""
    if template is None:
        template = default_template(condition)
    if template.condition != condition:
        raise ValueError(
            f"template is for condition {template.condition!r}, not {condition!r}"
        )
    values = {"history": _history_block(record), "query": record.query}
    if condition == "seen":
        if corpus is None:
            raise ValueError("seen condition requires a corpus")
        doc = resolve_positive(record, corpus)
        if not record.gold_answer:
            raise ValueError(
                f"record {record.record_id!r} has no gold_answer; required for seen prompts"
            )
        values["pos_doc"] = f"{doc.title}\n{doc.body}" if doc.title else doc.body
        values["answer"] = record.gold_answer
    return template.template_text.format(**values)


# -- providers --


class CompletionProvider:
    """Minimal provider contract: a stable id plus complete(prompt) -> text."""

    provider_id: str = "base"

    def complete(self, prompt: str) -> str:
        raise NotImplementedError


class HttpProvider(CompletionProvider):
    """POSTs {"model", "prompt"} as JSON and expects {"text": ...} back."""

    def __init__(self, endpoint: str, api_key: str = "", model: str = "default", timeout: float = 60.0):
        self.endpoint = endpoint
        self.api_key = api_key
        self.model = model
        self.timeout = timeout
        self.provider_id = f"http:{model}"

    @classmethod
    def from_env(cls) -> "HttpProvider":
        endpoint = os.environ.get(ENV_ENDPOINT)
        if not endpoint:
            raise ValueError(f"{ENV_ENDPOINT} is not set")
        return cls(
            endpoint,
            api_key=os.environ.get(ENV_API_KEY, ""),
            model=os.environ.get(ENV_MODEL, "default"),
        )

    def complete(self, prompt: str) -> str:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        resp = requests.post(
            self.endpoint,
            json={"model": self.model, "prompt": prompt},
            headers=headers,
            timeout=self.timeout,
        )
        resp.raise_for_status()
        return resp.json()["text"]


class CallableProvider(CompletionProvider):
    """Wraps any prompt -> text function; handy for tests and offline runs."""

    def __init__(self, provider_id: str, fn: Callable[[str], str]):
        self.provider_id = provider_id
        self._fn = fn

    def complete(self, prompt: str) -> str:
        return self._fn(prompt)


# -- deterministic mock rewriter --

_PRONOUNS = frozenset({"it", "they", "their", "he", "she", "this", "that"})


def _latest_referent(record: QueryRecord) -> str | None:
    """Most recent capitalized noun phrase in the history, original casing."""
    for turn in record.history:  # history is most-recent-first
        for text in (turn.answer, turn.question):
            spans = [s for s in extract_entity_spans(text) if not s.isdigit()]
            if spans:
                return spans[-1]
    return None


def mock_resolve(record: QueryRecord, condition: str = "unseen") -> str:
    """Rule-based stand-in for an LLM rewriter.

    Replaces pronouns in the query with the most recent capitalized noun
    phrase from the history.  Under ``seen`` it additionally appends the first
    gold-answer entity that the history does not mention, deliberately
    emulating answer leakage.
    """
    referent = _latest_referent(record)
    out = []
    for tok in record.query.split():
        core = tok.strip(string.punctuation)
        if referent is not None and core.lower() in _PRONOUNS:
            out.append(tok.replace(core, referent))
        else:
            out.append(tok)
    text = " ".join(out)
    if condition == "seen":
        history_text = " . ".join(f"{t.question} . {t.answer}" for t in record.history)
        known = extract_entities(history_text)
        for span in extract_entity_spans(record.gold_answer):
            if span.lower() not in known:
                if span.lower() not in text.lower():
                    text = f"{text} {span}"
                break
    return text


def mock_provider(records: list[QueryRecord], condition: str) -> CallableProvider:
    """Provider that answers each record's prompt with its mock_resolve text.

    Prompts are matched back to records by the embedded query text, so it only
    suits fixtures with distinct queries.
    """
    by_query = {r.query: r for r in records}

    def _complete(prompt: str) -> str:
        for query, record in by_query.items():
            if query in prompt:
                return mock_resolve(record, condition)
        raise ValueError("prompt does not match any known record")

    return CallableProvider(f"mock:{condition}", _complete)


# -- job execution with cache --


@dataclass
class SynthesisJob:
    records: list[QueryRecord]
    condition: str
    provider: CompletionProvider
    cache_dir: Path
    corpus: Corpus | None = None
    template: PromptTemplate | None = None
    max_concurrency: int = 4
    max_retries: int = 2
    backoff_base: float = 1.0

    def __post_init__(self):
        if self.condition not in CONDITIONS:
            raise ValueError(f"unknown condition {self.condition!r}")
        if self.max_concurrency < 1:
            raise ValueError("max_concurrency must be >= 1")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        self.cache_dir = Path(self.cache_dir)
        if self.template is None:
            self.template = default_template(self.condition)


@dataclass
class SynthesisResult:
    rewrites: dict[str, str]
    failures: dict[str, str] = field(default_factory=dict)
    provider_calls: int = 0
    cache_hits: int = 0

    def summary(self) -> str:
        lines = [
            f"rewrites: {len(self.rewrites)}  failures: {len(self.failures)}  "
            f"provider calls: {self.provider_calls}  cache hits: {self.cache_hits}"
        ]
        for record_id in sorted(self.failures):
            lines.append(f"  failed {record_id}: {self.failures[record_id]}")
        return "\n".join(lines)


def _cache_path(job: SynthesisJob) -> Path:
    safe_provider = re.sub(r"[^\w.-]+", "_", job.provider.provider_id)
    name = f"{safe_provider}__{job.condition}__{job.template.fingerprint}.jsonl"
    return job.cache_dir / name


def _load_cache(path: Path) -> dict[str, str]:
    cached: dict[str, str] = {}
    if path.exists():
        with path.open("r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    obj = json.loads(line)
                    cached[obj["record_id"]] = obj["rewrite"]
    return cached


def _write_cache(path: Path, cached: dict[str, str]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("w", encoding="utf-8") as fh:
        for record_id in sorted(cached):
            fh.write(
                json.dumps(
                    {"record_id": record_id, "rewrite": cached[record_id]},
                    ensure_ascii=False,
                    sort_keys=True,
                )
                + "\n"
            )
    tmp.replace(path)


def _call_with_retry(job: SynthesisJob, prompt: str, counter: dict, lock: threading.Lock) -> str:
    last_error = "empty response"
    for attempt in range(job.max_retries + 1):
        if attempt > 0 and job.backoff_base > 0:
            delay = job.backoff_base * (2 ** (attempt - 1))
            time.sleep(delay + random.uniform(0, delay * 0.1))
        try:
            with lock:
                counter["calls"] += 1
            text = job.provider.complete(prompt)
        except Exception as exc:
            last_error = str(exc) or type(exc).__name__
            continue
        if text and text.strip():
            return text.strip()
        last_error = "empty response"
    raise RuntimeError(last_error)


def synthesize(job: SynthesisJob) -> SynthesisResult:
    """Produce one rewrite per record, reusing the on-disk cache.

    Provider failures (after retries) and empty responses are recorded per
    record without aborting the job.  The refreshed cache file is written
    atomically (temp file + rename).
    """
    cache_path = _cache_path(job)
    cached = _load_cache(cache_path)
    result = SynthesisResult(rewrites={})
    pending: list[QueryRecord] = []
    for record in job.records:
        if record.record_id in cached:
            result.rewrites[record.record_id] = cached[record.record_id]
            result.cache_hits += 1
        else:
            pending.append(record)

    counter = {"calls": 0}
    lock = threading.Lock()
    if pending:
        prompts = {
            r.record_id: render_prompt(r, job.condition, job.corpus, job.template)
            for r in pending
        }
        with ThreadPoolExecutor(max_workers=job.max_concurrency) as pool:
            futures = {
                pool.submit(_call_with_retry, job, prompts[r.record_id], counter, lock): r
                for r in pending
            }
            for future in as_completed(futures):
                record = futures[future]
                try:
                    result.rewrites[record.record_id] = future.result()
                except Exception as exc:
                    result.failures[record.record_id] = str(exc)
                    logger.warning("synthesis failed for %s: %s", record.record_id, exc)
    result.provider_calls = counter["calls"]

    merged = dict(cached)
    merged.update(
        {rid: text for rid, text in result.rewrites.items() if rid not in cached}
    )
    if merged != cached or not cache_path.exists():
        _write_cache(cache_path, merged)
    return result
