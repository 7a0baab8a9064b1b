"""Deterministic text-overlap metrics and embedding-similarity summaries.

All overlap metrics operate on token lists produced by :func:`tokenize` and
report percentages on a 0-100 scale.  ROUGE scores are F1; BLEU is
sentence-level with add-one smoothing on zero counts for n >= 2.
"""

from __future__ import annotations

import math
import re
import string
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)
_ARTICLE_RE = re.compile(r"\b(a|an|the)\b")
_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


def tokenize(text: str) -> list[str]:
    """Lowercase and split on runs of non-alphanumeric characters."""
    return _TOKEN_RE.findall(text.lower())


def _ngrams(tokens: Sequence[str], n: int) -> list[tuple[str, ...]]:
    return [tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)]


def _counts(grams: Iterable[tuple[str, ...]]) -> dict[tuple[str, ...], int]:
    counts: dict[tuple[str, ...], int] = {}
    for g in grams:
        counts[g] = counts.get(g, 0) + 1
    return counts


def _clipped_overlap(cand: Sequence[str], ref: Sequence[str], n: int) -> tuple[int, int, int]:
    """Clipped n-gram matches plus candidate/reference n-gram totals."""
    cand_grams = _ngrams(cand, n)
    ref_counts = _counts(_ngrams(ref, n))
    overlap = 0
    for g, c in _counts(cand_grams).items():
        overlap += min(c, ref_counts.get(g, 0))
    return overlap, len(cand_grams), len(ref) - n + 1 if len(ref) >= n else 0


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def rouge_n(candidate: Sequence[str], reference: Sequence[str], n: int) -> float:
    """ROUGE-N F1 (percentage) from clipped n-gram precision/recall."""
    if n not in (1, 2):
        raise ValueError("n must be 1 or 2")
    overlap, n_cand, n_ref = _clipped_overlap(candidate, reference, n)
    if n_cand == 0 or n_ref == 0:
        return 0.0
    return 100.0 * _f1(overlap / n_cand, overlap / n_ref)


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    # single-row DP over the shorter sequence
    if len(b) > len(a):
        a, b = b, a
    if not b:
        return 0
    row = [0] * (len(b) + 1)
    for x in a:
        prev = 0
        for j, y in enumerate(b, start=1):
            cur = row[j]
            row[j] = prev + 1 if x == y else max(row[j - 1], row[j])
            prev = cur
    return row[-1]


def rouge_l(candidate: Sequence[str], reference: Sequence[str]) -> float:
    """ROUGE-L F1 (percentage) from the longest common subsequence."""
    if not candidate or not reference:
        return 0.0
    lcs = _lcs_length(candidate, reference)
    return 100.0 * _f1(lcs / len(candidate), lcs / len(reference))


def bleu_4(candidate: Sequence[str], reference: Sequence[str]) -> float:
    """Sentence-level BLEU-4 (percentage).

    Uniform 0.25 weights over n = 1..4; zero counts for n >= 2 fall back to
    add-one smoothing ``1 / (total + 1)``; a zero unigram count scores 0.
    The brevity penalty is exp(1 - r/c) when the candidate is shorter.
    """
    if not candidate:
        return 0.0
    log_sum = 0.0
    for n in range(1, 5):
        overlap, total, _ = _clipped_overlap(candidate, reference, n)
        if n == 1:
            if overlap == 0:
                return 0.0
            p = overlap / total
        elif overlap == 0:
            p = 1.0 / (total + 1)
        else:
            p = overlap / total
        log_sum += 0.25 * math.log(p)
    c, r = len(candidate), len(reference)
    brevity = 1.0 if c >= r else math.exp(1.0 - r / c)
    return 100.0 * brevity * math.exp(log_sum)


def normalize_answer(text: str) -> str:
    """Lowercase, drop punctuation and articles, collapse whitespace."""
    text = text.lower().translate(_PUNCT_TABLE)
    text = _ARTICLE_RE.sub(" ", text)
    return " ".join(text.split())


def exact_match(candidate: str, reference: str) -> int:
    """1 iff the normalized texts are equal, else 0."""
    return int(normalize_answer(candidate) == normalize_answer(reference))


def mean_token_length(texts: Iterable[str]) -> float:
    """Mean token count over a collection of texts (0.0 for an empty one)."""
    lengths = [len(tokenize(t)) for t in texts]
    if not lengths:
        return 0.0
    return sum(lengths) / len(lengths)


@dataclass(frozen=True)
class MetricReport:
    """Corpus-level generation metrics, all on the 0-100 scale."""

    rouge1: float
    rouge2: float
    rougeL: float
    bleu4: float
    em: float
    n_samples: int

    def to_dict(self) -> dict:
        return {
            "rouge1": self.rouge1,
            "rouge2": self.rouge2,
            "rougeL": self.rougeL,
            "bleu4": self.bleu4,
            "em": self.em,
            "n_samples": self.n_samples,
        }


def score_corpus(candidates: Sequence[str], references: Sequence[str]) -> MetricReport:
    """Mean per-pair metrics over aligned candidate/reference texts."""
    if len(candidates) != len(references):
        raise ValueError("candidates and references must be aligned")
    if not candidates:
        raise ValueError("cannot score an empty corpus")
    r1 = r2 = rl = bl = em = 0.0
    for cand, ref in zip(candidates, references):
        ct, rt = tokenize(cand), tokenize(ref)
        r1 += rouge_n(ct, rt, 1)
        r2 += rouge_n(ct, rt, 2)
        rl += rouge_l(ct, rt)
        bl += bleu_4(ct, rt)
        em += exact_match(cand, ref)
    n = len(candidates)
    return MetricReport(
        rouge1=r1 / n,
        rouge2=r2 / n,
        rougeL=rl / n,
        bleu4=bl / n,
        em=100.0 * em / n,
        n_samples=n,
    )


def cosine_matrix(variants: Mapping[str, Sequence[np.ndarray]]) -> tuple[list[str], np.ndarray]:
    """Mean pairwise cosine similarity between query-variant embeddings.

    ``variants`` maps a variant name to one vector per sample; all variants
    must supply the same number of samples and vector dimension.  Entry (i, j)
    of the result is the mean over samples of cos(v_i, v_j).
    """
    names = list(variants)
    if not names:
        raise ValueError("no variants supplied")
    stacks = []
    n_samples = None
    dim = None
    for name in names:
        vectors = [np.asarray(v, dtype=np.float64) for v in variants[name]]
        if n_samples is None:
            n_samples = len(vectors)
        elif len(vectors) != n_samples:
            raise ValueError(f"variant {name!r} has {len(vectors)} samples, expected {n_samples}")
        if n_samples == 0:
            raise ValueError("variants must supply at least one sample")
        for i, vec in enumerate(vectors):
            if vec.ndim != 1:
                raise ValueError(f"variant {name!r} sample {i} is not a vector")
            if dim is None:
                dim = vec.shape[0]
            elif vec.shape[0] != dim:
                raise ValueError(f"variant {name!r} sample {i} has dimension {vec.shape[0]}, expected {dim}")
            norm = np.linalg.norm(vec)
            if norm == 0.0:
                raise ValueError(f"variant {name!r} sample {i} is a zero vector")
        stacks.append(np.stack([v / np.linalg.norm(v) for v in vectors]))
    k = len(names)
    matrix = np.empty((k, k), dtype=np.float64)
    for i in range(k):
        for j in range(i, k):
            sims = np.einsum("nd,nd->n", stacks[i], stacks[j])
            matrix[i, j] = matrix[j, i] = float(np.mean(sims))
    return names, matrix


def cosine_matrix_csv(names: Sequence[str], matrix: np.ndarray) -> str:
    """Render a cosine matrix as CSV (header row + one row per variant)."""
    lines = ["variant," + ",".join(names)]
    for i, name in enumerate(names):
        lines.append(name + "," + ",".join(f"{matrix[i, j]:.6f}" for j in range(len(names))))
    return "\n".join(lines) + "\n"
