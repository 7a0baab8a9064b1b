"""Embed a corpus, search it, and score retrieval per rewrite variant.

The embedder is a hashed tf-idf: deterministic, dependency-free, unit-norm
rows, so the flat index's inner product is cosine similarity.  The point of
the demo is the gap between raw conversational queries (pronouns retrieve
nothing) and their rewrites.
"""

from rewritekit import (
    HashedTfidf,
    ToyTaskConfig,
    build_index,
    doc_text,
    evaluate_retrieval,
    generate_toytask,
    search,
)

task = generate_toytask(ToyTaskConfig(n_train=0, n_test=200, seed=7))
provider = HashedTfidf().fit(doc_text(d) for d in task.corpus)
index = build_index(task.corpus, provider)

record = task.test[0]
print(f"query:   {record.query!r}")
print(f"rewrite: {record.rewrite('manual')!r}")
for text in (record.query, record.rewrite("manual")):
    result = search(index, provider.embed(text), k=3)
    marks = [
        f"{doc_id}{' *' if doc_id == record.pos_doc_id else ''} ({score:.3f})"
        for doc_id, score in result.ranked
    ]
    print(f"  top-3 for {text!r}: {marks}")

print()
for variant in ("raw", "manual"):
    report = evaluate_retrieval(task.test, variant, index, provider, k=5)
    print(f"MRR@5 [{variant}]: {report.mrr:.2f}  ({report.n_queries} queries)")
