"""Synthetic coreference rewriting task used by the end-to-end suites.

Each record asks about a named place ("Blue Lake") through a pronoun, with the
place mentioned in the dialogue history, so the target rewrite substitutes the
name back in.  A configurable share of queries mentions the founder by name
even though the history never does; those queries leak entities that only the
document and answer contain, which gives the leakage audit something to find.

Everything is generated from a seeded RNG: corpus, train split, test split.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import Corpus, Document, QueryRecord, make_record, save_dataset, with_rewrite
from .seq2seq import TinySeq2Seq, serialize_rewrite_input
from .synthesis import mock_resolve

_ADJECTIVES = ("Blue", "Green", "Amber", "Silver", "Crimson", "Golden", "Ivory", "Maple")
_NOUNS = ("Lake", "Harbor", "Ridge", "Garden", "Museum", "Tower", "Bridge", "Falls")
_REGION_FIRST = ("North", "South", "East", "West", "Upper", "Lower")
_REGION_SECOND = ("Valley", "Coast", "Plains", "Hills", "Basin", "Woods")
_FIRST_NAMES = ("Alice", "Brian", "Clara", "Derek", "Elena", "Felix", "Grace", "Hugo", "Irene", "Jonas")
_LAST_NAMES = ("Morgan", "Whitfield", "Okafor", "Tanaka", "Silva", "Novak", "Reyes", "Dupont", "Lindgren", "Castell")

_PRONOUNS = ("it", "this", "that")

# (kind, query template, rewrite template, answer template)
_TEMPLATES = (
    ("location", "where is {pron} ?", "where is {place} ?", "{place} is located in the {region} region ."),
    ("opened", "when did {pron} open ?", "when did {place} open ?", "{place} opened in {year} ."),
    ("founder", "who founded {pron} ?", "who founded {place} ?", "{place} was founded by {person} ."),
    ("founder_mention", "did {person} build {pron} ?", "did {person} build {place} ?", "{place} was founded by {person} ."),
)

# Most recent history turn; always names the place so pronouns resolve.
_MAIN_TURNS = (
    ("tell me about {place}", "{place} is a popular destination ."),
    ("i heard about {place}", "yes , {place} gets many visitors ."),
    ("have you visited {place} ?", "{place} is worth a visit ."),
)

# Optional earlier turn: entity-free small talk, or a different place when the
# distractor rate is raised.
_FILLER_TURNS = (
    ("can you help me plan a trip ?", "of course , happy to help ."),
    ("any suggestions for the weekend ?", "there are lovely spots nearby ."),
)
_DISTRACTOR_TURNS = (
    ("what about {other}", "{other} is quite far away ."),
    ("is {other} also nice ?", "{other} is pleasant too ."),
)


@dataclass(frozen=True)
class _Place:
    doc_id: str
    name: str
    region: str
    year: str
    founder: str


@dataclass(frozen=True)
class ToyTaskConfig:
    n_train: int = 2000
    n_test: int = 200
    n_places: int = 40
    seed: int = 7
    founder_mention_rate: float = 0.2
    two_turn_rate: float = 0.5
    distractor_rate: float = 0.0

    def __post_init__(self):
        if self.n_places < 2:
            raise ValueError("need at least two places")
        if self.n_places > len(_ADJECTIVES) * len(_NOUNS):
            raise ValueError("n_places exceeds the name pool")


@dataclass
class ToyTask:
    config: ToyTaskConfig
    corpus: Corpus
    train: list[QueryRecord]
    test: list[QueryRecord]


def _make_places(rng: np.random.Generator, n_places: int) -> list[_Place]:
    combos = [(a, n) for a in _ADJECTIVES for n in _NOUNS]
    picks = rng.choice(len(combos), size=n_places, replace=False)
    places = []
    for i, idx in enumerate(picks):
        adjective, noun = combos[idx]
        region = (
            f"{_REGION_FIRST[rng.integers(len(_REGION_FIRST))]} "
            f"{_REGION_SECOND[rng.integers(len(_REGION_SECOND))]}"
        )
        founder = (
            f"{_FIRST_NAMES[rng.integers(len(_FIRST_NAMES))]} "
            f"{_LAST_NAMES[rng.integers(len(_LAST_NAMES))]}"
        )
        places.append(
            _Place(
                doc_id=f"doc-{i:03d}",
                name=f"{adjective} {noun}",
                region=region,
                year=str(int(rng.integers(1850, 2021))),
                founder=founder,
            )
        )
    return places


def _make_corpus(places: Sequence[_Place]) -> Corpus:
    docs = []
    for p in places:
        body = (
            f"{p.name} is located in the {p.region} region . "
            f"{p.name} opened in {p.year} . "
            f"{p.name} was founded by {p.founder} ."
        )
        docs.append(Document(doc_id=p.doc_id, title=p.name, body=body))
    return Corpus(docs)


def _pick(rng: np.random.Generator, options):
    return options[int(rng.integers(len(options)))]


def _make_record(
    rng: np.random.Generator,
    places: Sequence[_Place],
    config: ToyTaskConfig,
    record_id: str,
) -> QueryRecord:
    place = _pick(rng, places)
    if rng.random() < config.founder_mention_rate:
        template = _TEMPLATES[3]
    else:
        template = _TEMPLATES[int(rng.integers(3))]
    _, query_tpl, rewrite_tpl, answer_tpl = template
    values = {
        "pron": _pick(rng, _PRONOUNS),
        "place": place.name,
        "region": place.region,
        "year": place.year,
        "person": place.founder,
    }
    main_q, main_a = _pick(rng, _MAIN_TURNS)
    history = [(main_q.format(**values), main_a.format(**values))]
    if rng.random() < config.two_turn_rate:
        if rng.random() < config.distractor_rate:
            other = _pick(rng, [p for p in places if p.doc_id != place.doc_id])
            turn_q, turn_a = _pick(rng, _DISTRACTOR_TURNS)
            history.append((turn_q.format(other=other.name), turn_a.format(other=other.name)))
        else:
            history.append(_pick(rng, _FILLER_TURNS))
    return make_record(
        record_id,
        history=history,
        query=query_tpl.format(**values),
        gold_answer=answer_tpl.format(**values),
        pos_doc_id=place.doc_id,
        manual_rewrite=rewrite_tpl.format(**values),
    )


def generate_toytask(config: ToyTaskConfig | None = None) -> ToyTask:
    if config is None:
        config = ToyTaskConfig()
    rng = np.random.default_rng(config.seed)
    places = _make_places(rng, config.n_places)
    corpus = _make_corpus(places)
    train = [
        _make_record(rng, places, config, f"train-{i:04d}")
        for i in range(config.n_train)
    ]
    test = [
        _make_record(rng, places, config, f"test-{i:04d}")
        for i in range(config.n_test)
    ]
    return ToyTask(config=config, corpus=corpus, train=train, test=test)


def attach_mock_rewrites(records: Sequence[QueryRecord]) -> list[QueryRecord]:
    """Add syn_unseen / syn_seen variants produced by the rule-based rewriter."""
    out = []
    for record in records:
        record = with_rewrite(record, "syn_unseen", mock_resolve(record, "unseen"))
        record = with_rewrite(record, "syn_seen", mock_resolve(record, "seen"))
        out.append(record)
    return out


def attach_model_rewrites(
    records: Sequence[QueryRecord], model: TinySeq2Seq, max_len: int = 16
) -> list[QueryRecord]:
    """Add the greedy model rewrite as the ``model`` variant."""
    out = []
    for record in records:
        text = model.rewrite_text(serialize_rewrite_input(record), max_len=max_len)
        out.append(with_rewrite(record, "model", text))
    return out


def sequence_exact_match(
    model: TinySeq2Seq,
    records: Sequence[QueryRecord],
    variant: str = "manual",
    max_len: int = 16,
) -> float:
    """Percentage of records whose greedy rewrite equals the target text."""
    if not records:
        raise ValueError("records must be non-empty")
    hits = 0
    for record in records:
        pred = model.rewrite_text(serialize_rewrite_input(record), max_len=max_len)
        if pred == record.rewrite(variant):
            hits += 1
    return 100.0 * hits / len(records)


def save_toytask(task: ToyTask, directory: str | Path) -> None:
    """Write corpus.jsonl, train.jsonl, and test.jsonl under directory."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_dataset(list(task.corpus), directory / "corpus.jsonl")
    save_dataset(task.train, directory / "train.jsonl")
    save_dataset(task.test, directory / "test.jsonl")
