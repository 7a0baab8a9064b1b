import threading
import time

import pytest

from rewritekit import (
    CallableProvider,
    Corpus,
    Document,
    PromptTemplate,
    SynthesisJob,
    default_template,
    make_record,
    mock_provider,
    mock_resolve,
    render_prompt,
    synthesize,
)


def _record(query="when did it open", history=None, **kw):
    history = history if history is not None else [
        ("what should I visit", "you should visit the Eiffel Tower")
    ]
    return make_record("r1", history, query, **kw)


def test_default_templates_validate():
    unseen = default_template("unseen")
    seen = default_template("seen")
    assert "{query}" in unseen.template_text and "{history}" in unseen.template_text
    assert "{pos_doc}" in seen.template_text and "{answer}" in seen.template_text
    assert len(unseen.fingerprint) == 16
    assert unseen.fingerprint != seen.fingerprint


def test_template_placeholder_validation():
    with pytest.raises(ValueError, match="query"):
        PromptTemplate("unseen", "rewrite {history}")
    with pytest.raises(ValueError, match="unknown"):
        PromptTemplate("unseen", "{query} {bogus}")
    with pytest.raises(ValueError, match="pos_doc"):
        PromptTemplate("unseen", "{query} {pos_doc}")
    with pytest.raises(ValueError, match="pos_doc"):
        PromptTemplate("seen", "{query} {answer}")
    PromptTemplate("seen", "{query} {pos_doc} {answer}")  # minimal seen is fine


def test_render_prompt_history_and_seen_blocks():
    # history lists are stored most recent first, and the prompt keeps that order
    record = make_record(
        "r1",
        [("newest question", "newest answer"), ("older question", "older answer")],
        "the query",
        gold_answer="the gold answer",
        pos_doc_id="d1",
    )
    prompt = render_prompt(record, "unseen")
    assert "the query" in prompt
    assert prompt.index("newest question") < prompt.index("older question")
    assert "Q: newest question" in prompt and "A: newest answer" in prompt

    corpus = Corpus([Document("d1", "Doc Title", "Doc body.")])
    seen = render_prompt(record, "seen", corpus=corpus)
    assert "Doc Title\nDoc body." in seen
    assert "the gold answer" in seen

    with pytest.raises(ValueError):
        render_prompt(record, "seen")  # corpus required
    no_answer = make_record("r2", [], "q", pos_doc_id="d1")
    with pytest.raises(ValueError):
        render_prompt(no_answer, "seen", corpus=corpus)
    with pytest.raises(ValueError):
        render_prompt(record, "sideways")


def test_mock_resolve_replaces_pronouns():
    # the referent is the most recent entity mention: the last span in the
    # most recent turn's answer
    record = _record()
    assert mock_resolve(record) == "when did Eiffel Tower open"
    # punctuation around the pronoun survives
    punct = _record(query="when did it, open?")
    assert mock_resolve(punct) == "when did Eiffel Tower, open?"
    # no pronoun: query unchanged
    plain = _record(query="when did the tower open")
    assert mock_resolve(plain) == "when did the tower open"
    # answers outrank questions within a turn, newer turns outrank older ones
    layered = make_record(
        "r9",
        [
            ("is the Louvre near the Seine", "yes, the Seine passes the Louvre"),
            ("tell me about Notre Dame", "Notre Dame is a cathedral"),
        ],
        "who designed it",
    )
    assert mock_resolve(layered) == "who designed Louvre"


def test_mock_resolve_seen_appends_unseen_answer_entity():
    record = _record(gold_answer="It opened in 1889")
    text = mock_resolve(record, "seen")
    assert text.startswith("when did Eiffel Tower open")
    assert "1889" in text
    # an answer entity the history already mentions is not appended
    known = _record(gold_answer="at the Eiffel Tower")
    assert mock_resolve(known, "seen") == mock_resolve(known, "unseen")


def _job(records, provider, tmp_path, condition="unseen", **kw):
    return SynthesisJob(
        records=records,
        condition=condition,
        provider=provider,
        cache_dir=tmp_path / "cache",
        backoff_base=0.001,
        **kw,
    )


def test_synthesize_mock_end_to_end(tmp_path):
    records = [
        make_record("r1", [("what is famous there", "people visit the Louvre")], "who built it"),
        make_record("r2", [("what is that river", "that river is the Seine")], "how long is it"),
    ]
    provider = mock_provider(records, "unseen")
    result = synthesize(_job(records, provider, tmp_path))
    assert set(result.rewrites) == {"r1", "r2"}
    assert result.provider_calls == 2 and result.cache_hits == 0
    assert result.rewrites["r1"] == "who built Louvre"

    again = synthesize(_job(records, provider, tmp_path))
    assert again.rewrites == result.rewrites
    assert again.provider_calls == 0 and again.cache_hits == 2


def test_synthesize_retries_empty_responses(tmp_path):
    records = [make_record("r1", [], "plain query")]
    attempts = []

    def flaky(prompt):
        attempts.append(prompt)
        return "   " if len(attempts) == 1 else "resolved text"

    result = synthesize(_job(records, CallableProvider("flaky", flaky), tmp_path))
    assert result.rewrites["r1"] == "resolved text"
    assert result.provider_calls == 2


def test_synthesize_records_failures_without_aborting(tmp_path):
    records = [make_record("r1", [], "good one"), make_record("r2", [], "bad one")]

    def partial(prompt):
        if "bad one" in prompt:
            raise RuntimeError("provider exploded")
        return "fine"

    result = synthesize(
        _job(records, CallableProvider("partial", partial), tmp_path, max_retries=1)
    )
    assert result.rewrites == {"r1": "fine"}
    assert "provider exploded" in result.failures["r2"]
    assert "failed r2" in result.summary()


def test_cache_file_is_deterministic_and_keyed(tmp_path):
    records = [make_record(f"r{i}", [], f"query {i}") for i in range(6)]
    provider = CallableProvider("prov", lambda p: "text")
    job = _job(records, provider, tmp_path, max_concurrency=3)
    synthesize(job)
    cache_dir = tmp_path / "cache"
    files = sorted(f.name for f in cache_dir.iterdir())
    assert len(files) == 1
    assert files[0].startswith("prov__unseen__")
    first = (cache_dir / files[0]).read_bytes()

    # rerun with different concurrency: same bytes (sorted by record id)
    synthesize(_job(records, provider, tmp_path, max_concurrency=1))
    assert (cache_dir / files[0]).read_bytes() == first

    # a different template changes the cache key instead of poisoning it
    other = PromptTemplate("unseen", "rewrite: {query}")
    synthesize(_job(records, provider, tmp_path, template=other))
    assert len(list(cache_dir.iterdir())) == 2


def test_synthesize_runs_concurrently(tmp_path):
    records = [make_record(f"r{i}", [], f"query {i}") for i in range(8)]
    seen_threads = set()

    def slowish(prompt):
        seen_threads.add(threading.get_ident())
        time.sleep(0.05)
        return "out"

    synthesize(_job(records, CallableProvider("t", slowish), tmp_path, max_concurrency=4))
    assert len(seen_threads) > 1
