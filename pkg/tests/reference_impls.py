"""Independent reference implementations used as test oracles.

Written on purpose with different algorithms and data structures than the
package (Counter intersection, memoized recursion, plain loops over sorted
tuples) so that agreement is evidence rather than a shared bug.
"""

from __future__ import annotations

import math
import sys
from collections import Counter
from functools import lru_cache

# Same smoothing configuration as the package metrics: zero overlap at
# n >= 2 falls back to 1 / (total + 1); zero unigram overlap scores 0.


def ref_ngram_counter(tokens, n) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def ref_rouge_n(cand, ref, n) -> float:
    c, r = ref_ngram_counter(cand, n), ref_ngram_counter(ref, n)
    overlap = sum((c & r).values())
    total_c, total_r = sum(c.values()), sum(r.values())
    if total_c == 0 or total_r == 0:
        return 0.0
    precision, recall = overlap / total_c, overlap / total_r
    if precision + recall == 0:
        return 0.0
    return 100.0 * 2 * precision * recall / (precision + recall)


def ref_lcs_len(a, b) -> int:
    a, b = tuple(a), tuple(b)

    @lru_cache(maxsize=None)
    def go(i: int, j: int) -> int:
        if i == len(a) or j == len(b):
            return 0
        if a[i] == b[j]:
            return 1 + go(i + 1, j + 1)
        return max(go(i + 1, j), go(i, j + 1))

    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, len(a) + len(b) + 100))
    try:
        return go(0, 0)
    finally:
        sys.setrecursionlimit(limit)


def ref_rouge_l(cand, ref) -> float:
    if not cand or not ref:
        return 0.0
    lcs = ref_lcs_len(cand, ref)
    precision, recall = lcs / len(cand), lcs / len(ref)
    if precision + recall == 0:
        return 0.0
    return 100.0 * 2 * precision * recall / (precision + recall)


def ref_bleu_4(cand, ref) -> float:
    if not cand:
        return 0.0
    log_terms = []
    for n in range(1, 5):
        c, r = ref_ngram_counter(cand, n), ref_ngram_counter(ref, n)
        overlap = sum(min(count, r[gram]) for gram, count in c.items())
        total = sum(c.values())
        if n == 1:
            if overlap == 0:
                return 0.0
            log_terms.append(math.log(overlap / total))
        elif overlap == 0:
            log_terms.append(math.log(1.0 / (total + 1)))
        else:
            log_terms.append(math.log(overlap / total))
    score = math.exp(sum(log_terms) / 4.0)
    if len(cand) < len(ref):
        score *= math.exp(1.0 - len(ref) / len(cand))
    return 100.0 * score


_ARTICLES = {"a", "an", "the"}


def ref_exact_match(candidate: str, reference: str) -> int:
    def norm(text: str) -> str:
        kept = []
        for ch in text.lower():
            if ch.isalnum() or ch.isspace():
                kept.append(ch)
            elif not (32 < ord(ch) < 127):
                kept.append(ch)
        words = "".join(kept).split()
        return " ".join(w for w in words if w not in _ARTICLES)

    return int(norm(candidate) == norm(reference))


def ref_leakage_counts(query_entities, history_entities, docans_entities):
    """Brute-force N, M, K and the two ratios via explicit loops."""
    n = m = k = 0
    for entity in query_entities:
        n += 1
        if entity not in history_entities:
            m += 1
            if entity in docans_entities:
                k += 1
    lr = k / m if m else 0.0
    pure_lr = k / n if n else 0.0
    return n, m, k, lr, pure_lr


def ref_search(doc_ids, matrix, query, k):
    """Full sort by (-score, doc_id) over every document."""
    scores = matrix @ query
    order = sorted(range(len(doc_ids)), key=lambda i: (-float(scores[i]), doc_ids[i]))
    return [(doc_ids[i], float(scores[i])) for i in order[:k]]


def ref_mrr(ranked_lists, gold, k) -> float:
    """ranked_lists: query_id -> ordered doc ids; gold: query_id -> doc id."""
    total = 0.0
    n = 0
    for query_id, ranked in ranked_lists.items():
        if query_id not in gold:
            continue
        n += 1
        for pos, doc_id in enumerate(ranked[:k], start=1):
            if doc_id == gold[query_id]:
                total += 1.0 / pos
                break
    if n == 0:
        raise ValueError("no scorable queries")
    return 100.0 * total / n


# Gradient-check helper shared by the tests; the floor absorbs finite
# difference round-off on near-zero entries (see cli selftest note).
GRAD_FLOOR = 3e-5


def rel_err(a: float, b: float, floor: float = GRAD_FLOOR) -> float:
    return abs(a - b) / max(floor, abs(a) + abs(b))
