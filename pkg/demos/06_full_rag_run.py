"""Run the whole pipeline end to end and compare rewriters in one table.

Each run is rewrite -> retrieve -> generate -> score.  The generator here is
extractive (best sentence from the retrieved documents by unigram F1), so
answer quality is a direct function of whether the right document came back.
"""

from rewritekit import (
    HashedTfidf,
    RagConfig,
    RewriterSpec,
    ToyTaskConfig,
    build_index,
    comparison_table,
    doc_text,
    generate_toytask,
    run_rag,
)

task = generate_toytask(ToyTaskConfig(n_train=0, n_test=150, seed=7))
provider = HashedTfidf().fit(doc_text(d) for d in task.corpus)
index = build_index(task.corpus, provider)

reports = []
for spec in ("none_raw", "manual"):
    config = RagConfig(rewriter=RewriterSpec.parse(spec), k=5)
    report = run_rag(task.test, task.corpus, index, provider, config)
    reports.append(report)
    fractions = report.stage_fractions()
    shares = ", ".join(f"{stage} {fractions[stage]:.0%}" for stage in fractions)
    print(f"{report.label}: {report.n_records} records ({shares})")

print()
print(comparison_table(reports, fmt="md"))
