"""Supervised and preference-based training objectives for the rewriter.

The SFT loss is mean-per-example token-level cross-entropy.  Preference
training supports three pairwise losses over sequence log-probabilities:
``dpo`` (sigmoid of policy-vs-reference log-ratio differences), ``apo`` (the
same with an anchor model in place of the reference), and ``apo_zero`` (a sum
of two sigmoid terms against the initial policy, bounded in (0, 2)).  All
losses return exact gradients with respect to every bundle field, which the
trainer chains through the seq2seq backward pass.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field
from math import ceil, exp, isfinite, log1p
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import Corpus, QueryRecord
from .metrics import rouge_l, tokenize
from .rag import Generator, extractive_generate
from .retrieval import EmptyTextError, FlatIndex, search
from .seq2seq import (
    OptimConfig,
    OptimState,
    TinySeq2Seq,
    adam_step,
    sequence_logprob,
    serialize_rewrite_input,
)

LOSS_VARIANTS = ("dpo", "apo", "apo_zero")

BUNDLE_FIELDS = (
    "d_theta_plus",
    "d_theta_minus",
    "d_ref_plus",
    "d_ref_minus",
    "d_anc_plus",
    "d_anc_minus",
)


@dataclass(frozen=True)
class LogProbBundle:
    """Sequence log-probs of the chosen/rejected pair under three models.

    theta is the policy being trained; ref is the frozen reference; anc is the
    anchor (for apo_zero, the initial pre-preference policy).
    """

    d_theta_plus: float
    d_theta_minus: float
    d_ref_plus: float = 0.0
    d_ref_minus: float = 0.0
    d_anc_plus: float = 0.0
    d_anc_minus: float = 0.0

    def __post_init__(self):
        for name in BUNDLE_FIELDS:
            value = getattr(self, name)
            if not isfinite(value):
                raise ValueError(f"bundle field {name} is not finite")
            if value > 0.0:
                raise ValueError(
                    f"bundle field {name} is {value}; log-probabilities cannot be positive"
                )


@dataclass(frozen=True)
class PrefLossConfig:
    beta: float = 0.3
    variant: str = "dpo"
    pair_threshold: float = 0.05
    epochs: int = 4
    batch_size: int = 2
    grad_accum: int = 8
    lr: float = 1e-5
    warmup_ratio: float = 0.1
    schedule: str = "linear"
    shuffle_seed: int = 29

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.variant not in LOSS_VARIANTS:
            raise ValueError(f"unknown loss variant {self.variant!r}")
        if self.pair_threshold < 0:
            raise ValueError("pair_threshold must be >= 0")
        if min(self.epochs, self.batch_size, self.grad_accum) < 1:
            raise ValueError("epochs, batch_size and grad_accum must be >= 1")


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


def _softplus(x: float) -> float:
    # log(1 + e^x) without overflow for large |x|
    if x > 0:
        return x + log1p(exp(-x))
    return log1p(exp(x))


def _zero_grads() -> dict[str, float]:
    return {name: 0.0 for name in BUNDLE_FIELDS}


def _sigmoid_pair_loss(
    bundle: LogProbBundle, beta: float, base_plus: str, base_minus: str
) -> tuple[float, dict[str, float]]:
    """-log sigmoid(beta * (policy log-ratio diff vs the chosen baseline))."""
    inner = (bundle.d_theta_plus - bundle.d_theta_minus) - (
        getattr(bundle, base_plus) - getattr(bundle, base_minus)
    )
    u = beta * inner
    loss = _softplus(-u)
    slope = beta * (1.0 - _sigmoid(u))
    grads = _zero_grads()
    grads["d_theta_plus"] = -slope
    grads["d_theta_minus"] = slope
    grads[base_plus] = slope
    grads[base_minus] = -slope
    return loss, grads


def dpo_loss(bundle: LogProbBundle, config: PrefLossConfig) -> tuple[float, dict[str, float]]:
    return _sigmoid_pair_loss(bundle, config.beta, "d_ref_plus", "d_ref_minus")


def apo_loss(bundle: LogProbBundle, config: PrefLossConfig) -> tuple[float, dict[str, float]]:
    return _sigmoid_pair_loss(bundle, config.beta, "d_anc_plus", "d_anc_minus")


def apo_zero_loss(bundle: LogProbBundle, config: PrefLossConfig) -> tuple[float, dict[str, float]]:
    """(1 - sigmoid(beta*logratio_chosen)) + sigmoid(beta*logratio_rejected).

    Log-ratios are taken against the anchor fields, which hold the initial
    policy's log-probs.  Bounded in (0, 2); equals 1.0 when policy == anchor.
    """
    beta = config.beta
    sc = _sigmoid(beta * (bundle.d_theta_plus - bundle.d_anc_plus))
    sr = _sigmoid(beta * (bundle.d_theta_minus - bundle.d_anc_minus))
    loss = (1.0 - sc) + sr
    grads = _zero_grads()
    grads["d_theta_plus"] = -beta * sc * (1.0 - sc)
    grads["d_anc_plus"] = beta * sc * (1.0 - sc)
    grads["d_theta_minus"] = beta * sr * (1.0 - sr)
    grads["d_anc_minus"] = -beta * sr * (1.0 - sr)
    return loss, grads


def preference_loss(bundle: LogProbBundle, config: PrefLossConfig) -> tuple[float, dict[str, float]]:
    if config.variant == "dpo":
        return dpo_loss(bundle, config)
    if config.variant == "apo":
        return apo_loss(bundle, config)
    return apo_zero_loss(bundle, config)


# -- supervised fine-tuning --

EncodedExample = tuple[list[int], list[int]]


@dataclass(frozen=True)
class SftConfig:
    lr: float = 1e-4
    epochs: int = 2
    batch_size: int = 1
    warmup_ratio: float = 0.3
    schedule: str = "cosine"
    shuffle_seed: int = 13

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")


def encode_sft_dataset(
    records: Sequence[QueryRecord], variant: str, vocab
) -> list[EncodedExample]:
    """(input ids, target ids ending in EOS) per record for one rewrite variant."""
    out = []
    for record in records:
        x = vocab.encode(serialize_rewrite_input(record))
        y = vocab.encode_target(record.rewrite(variant))
        out.append((x, y))
    return out


def sft_loss(model: TinySeq2Seq, batch: Sequence[EncodedExample]):
    """Mean over examples of the per-example token negative log-likelihood sum."""
    if not batch:
        raise ValueError("batch must be non-empty")
    n = len(batch)
    total = 0.0
    grads = model.zero_grads()
    for input_ids, output_ids in batch:
        logprob, cache = model.forward(input_ids, output_ids)
        total -= logprob / n
        model.backward(cache, dlogp_coef=-1.0 / n, grads=grads)
    return total, grads


@dataclass
class TrainingHistory:
    kind: str
    epoch_losses: list[float] = field(default_factory=list)
    epoch_margins: list[float] = field(default_factory=list)
    steps: int = 0
    aborted: bool = False
    margin_before: float | None = None
    margin_after: float | None = None
    frac_positive_before: float | None = None
    frac_positive_after: float | None = None

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "epoch_losses": self.epoch_losses,
            "epoch_margins": self.epoch_margins,
            "steps": self.steps,
            "aborted": self.aborted,
            "margin_before": self.margin_before,
            "margin_after": self.margin_after,
            "frac_positive_before": self.frac_positive_before,
            "frac_positive_after": self.frac_positive_after,
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, ensure_ascii=False)


def train_sft(
    model: TinySeq2Seq, dataset: Sequence[EncodedExample], config: SftConfig
) -> TrainingHistory:
    """In-place SFT with Adam and the configured warmup schedule.

    A non-finite loss rolls the model back to the start of that epoch and
    stops training.
    """
    if not dataset:
        raise ValueError("dataset must be non-empty")
    n = len(dataset)
    steps_per_epoch = ceil(n / config.batch_size)
    optim_config = OptimConfig(
        lr=config.lr,
        total_steps=config.epochs * steps_per_epoch,
        schedule=config.schedule,
        warmup_ratio=config.warmup_ratio,
    )
    state = OptimState(model)
    history = TrainingHistory(kind="sft")
    rng = np.random.default_rng(config.shuffle_seed)
    for _ in range(config.epochs):
        order = rng.permutation(n)
        snapshot = {k: p.copy() for k, p in model.params.items()}
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            batch = [dataset[i] for i in order[start : start + config.batch_size]]
            loss, grads = sft_loss(model, batch)
            if not isfinite(loss):
                model.params = snapshot
                history.aborted = True
                return history
            adam_step(model, grads, state, optim_config)
            history.steps += 1
            epoch_loss += loss * len(batch)
        history.epoch_losses.append(epoch_loss / n)
    return history


# -- preference pairs --


@dataclass(frozen=True)
class PreferencePair:
    input: str
    chosen: str
    rejected: str
    score_chosen: float
    score_rejected: float

    def __post_init__(self):
        if self.chosen == self.rejected:
            raise ValueError("chosen and rejected must differ")
        if self.score_chosen < self.score_rejected:
            raise ValueError("score_chosen must be >= score_rejected")

    @property
    def margin(self) -> float:
        return self.score_chosen - self.score_rejected

    def to_dict(self) -> dict:
        return {
            "input": self.input,
            "chosen": self.chosen,
            "rejected": self.rejected,
            "score_chosen": self.score_chosen,
            "score_rejected": self.score_rejected,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "PreferencePair":
        return cls(
            input=obj["input"],
            chosen=obj["chosen"],
            rejected=obj["rejected"],
            score_chosen=float(obj["score_chosen"]),
            score_rejected=float(obj["score_rejected"]),
        )


def save_pairs(pairs: Sequence[PreferencePair], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("w", encoding="utf-8") as fh:
        for pair in pairs:
            fh.write(json.dumps(pair.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")
    tmp.replace(path)


def load_pairs(path: str | Path) -> list[PreferencePair]:
    pairs = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                pairs.append(PreferencePair.from_dict(json.loads(line)))
    return pairs


@dataclass
class FeedbackEnv:
    """Everything candidate scoring needs: index, corpus, embedder, generator."""

    corpus: Corpus
    index: FlatIndex
    provider: object
    k: int = 5
    generator: Generator = extractive_generate


@dataclass(frozen=True)
class PairBuildConfig:
    n_candidates: int = 8
    temperature: float = 1.0
    max_len: int = 32
    w_retrieval: float = 0.5
    w_generation: float = 0.5
    threshold: float = 0.05
    seed: int = 101

    def __post_init__(self):
        if self.n_candidates < 2:
            raise ValueError("need at least two candidates to form a pair")
        if self.threshold < 0:
            raise ValueError("threshold must be >= 0")


def score_candidate(env: FeedbackEnv, text: str, record: QueryRecord, config: PairBuildConfig) -> float:
    """Feedback scalar: retrieval reciprocal rank plus generation ROUGE-L.

    0.5 * (1/rank of gold doc, 0 beyond k) + 0.5 * ROUGE-L(answer, gold)/100
    under default weights.  A candidate that cannot be embedded scores 0.
    """
    try:
        vector = env.provider.embed(text)
    except EmptyTextError:
        return 0.0
    result = search(env.index, vector, env.k, query_id=record.record_id)
    rank = result.rank_of(record.pos_doc_id) if record.pos_doc_id else 0
    retrieval_term = 1.0 / rank if rank else 0.0
    docs = [d for d in (env.corpus.get(i) for i, _ in result.ranked) if d is not None]
    answer = env.generator(text, docs)
    generation_term = rouge_l(tokenize(answer), tokenize(record.gold_answer)) / 100.0
    return config.w_retrieval * retrieval_term + config.w_generation * generation_term


@dataclass
class PairBuildResult:
    pairs: list[PreferencePair]
    n_records: int
    n_skipped_identical: int
    n_skipped_margin: int

    def summary(self) -> str:
        return (
            f"records: {self.n_records}  pairs: {len(self.pairs)}  "
            f"skipped identical: {self.n_skipped_identical}  "
            f"skipped below margin: {self.n_skipped_margin}"
        )


def _candidate_seed(base_seed: int, record_id: str, i: int) -> int:
    return (base_seed * 1_000_003 + zlib.crc32(record_id.encode("utf-8")) + i) % (2**31)


def build_preference_pairs(
    records: Sequence[QueryRecord],
    model: TinySeq2Seq,
    env: FeedbackEnv,
    config: PairBuildConfig | None = None,
) -> PairBuildResult:
    """Sample candidates per record, score them, keep best-vs-worst pairs.

    Candidates are sampled at the configured temperature under distinct
    per-record seeds, so a rebuild is reproducible.  Records whose candidates
    all coincide, or whose best-worst margin falls below the threshold, are
    skipped and counted.  Score ties break toward the shorter candidate.
    """
    if config is None:
        config = PairBuildConfig()
    result = PairBuildResult(pairs=[], n_records=len(records), n_skipped_identical=0, n_skipped_margin=0)
    for record in records:
        input_text = serialize_rewrite_input(record)
        input_ids = model.vocab.encode(input_text)
        candidates = set()
        for i in range(config.n_candidates):
            ids = model.generate(
                input_ids,
                max_len=config.max_len,
                mode="sample",
                temperature=config.temperature,
                seed=_candidate_seed(config.seed, record.record_id, i),
            )
            candidates.add(model.vocab.decode(ids))
        if len(candidates) < 2:
            result.n_skipped_identical += 1
            continue
        scores = {
            text: score_candidate(env, text, record, config)
            for text in sorted(candidates)
        }
        chosen = min(scores, key=lambda t: (-scores[t], len(t), t))
        rejected = min(scores, key=lambda t: (scores[t], len(t), t))
        margin = scores[chosen] - scores[rejected]
        if chosen == rejected:
            result.n_skipped_identical += 1
            continue
        if margin < config.threshold:
            result.n_skipped_margin += 1
            continue
        result.pairs.append(
            PreferencePair(
                input=input_text,
                chosen=chosen,
                rejected=rejected,
                score_chosen=scores[chosen],
                score_rejected=scores[rejected],
            )
        )
    return result


# -- preference training --


def _encode_pair(vocab, pair: PreferencePair):
    return (
        vocab.encode(pair.input),
        vocab.encode_target(pair.chosen),
        vocab.encode_target(pair.rejected),
    )


def preference_margin_stats(
    model: TinySeq2Seq, pairs: Sequence[PreferencePair]
) -> tuple[float, float]:
    """(mean of d_theta_plus - d_theta_minus, fraction of pairs with it > 0)."""
    margins = []
    for pair in pairs:
        x, yp, ym = _encode_pair(model.vocab, pair)
        margins.append(sequence_logprob(model, x, yp) - sequence_logprob(model, x, ym))
    return float(np.mean(margins)), float(np.mean([m > 0 for m in margins]))


def train_preference(
    checkpoint: TinySeq2Seq,
    pairs: Sequence[PreferencePair],
    config: PrefLossConfig | None = None,
) -> tuple[TinySeq2Seq, TrainingHistory]:
    """Preference-train a clone of the checkpoint; the checkpoint stays frozen.

    The frozen checkpoint serves as both reference and anchor (it is the
    initial policy, so for apo_zero the anchor fields are exactly the
    pre-training log-probs).  Reference log-probs are constant, so they are
    computed once per pair up front.
    """
    if not pairs:
        raise ValueError("pairs must be non-empty")
    if config is None:
        config = PrefLossConfig()
    model = checkpoint.clone()
    reference = checkpoint
    vocab = model.vocab

    encoded = []
    for pair in pairs:
        x, yp, ym = _encode_pair(vocab, pair)
        ref_p = sequence_logprob(reference, x, yp)
        ref_m = sequence_logprob(reference, x, ym)
        encoded.append((x, yp, ym, ref_p, ref_m))

    history = TrainingHistory(kind=config.variant)
    history.margin_before, history.frac_positive_before = preference_margin_stats(model, pairs)

    n = len(encoded)
    window = config.batch_size * config.grad_accum
    steps_per_epoch = ceil(n / window)
    optim_config = OptimConfig(
        lr=config.lr,
        total_steps=config.epochs * steps_per_epoch,
        schedule=config.schedule,
        warmup_ratio=config.warmup_ratio,
    )
    state = OptimState(model)
    rng = np.random.default_rng(config.shuffle_seed)
    for _ in range(config.epochs):
        order = rng.permutation(n)
        snapshot = {k: p.copy() for k, p in model.params.items()}
        epoch_loss = 0.0
        epoch_margin = 0.0
        for start in range(0, n, window):
            chunk = order[start : start + window]
            m = len(chunk)
            grads = model.zero_grads()
            chunk_loss = 0.0
            for idx in chunk:
                x, yp, ym, ref_p, ref_m = encoded[idx]
                lp, cache_p = model.forward(x, yp)
                lm, cache_m = model.forward(x, ym)
                bundle = LogProbBundle(
                    d_theta_plus=lp,
                    d_theta_minus=lm,
                    d_ref_plus=ref_p,
                    d_ref_minus=ref_m,
                    d_anc_plus=ref_p,
                    d_anc_minus=ref_m,
                )
                loss, dgrads = preference_loss(bundle, config)
                model.backward(cache_p, dlogp_coef=dgrads["d_theta_plus"] / m, grads=grads)
                model.backward(cache_m, dlogp_coef=dgrads["d_theta_minus"] / m, grads=grads)
                chunk_loss += loss
                epoch_margin += lp - lm
            if not isfinite(chunk_loss):
                model.params = snapshot
                history.aborted = True
                history.margin_after, history.frac_positive_after = preference_margin_stats(model, pairs)
                return model, history
            adam_step(model, grads, state, optim_config)
            history.steps += 1
            epoch_loss += chunk_loss
        history.epoch_losses.append(epoch_loss / n)
        history.epoch_margins.append(epoch_margin / n)
    history.margin_after, history.frac_positive_after = preference_margin_stats(model, pairs)
    return model, history
