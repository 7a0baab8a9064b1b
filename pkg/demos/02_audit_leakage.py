"""Audit rewrites for entity leakage.

An entity in a rewrite "leaks" when it appears in neither the raw query nor
the dialogue history but does appear in the gold document or answer: the
annotator could only have copied it from material a live system never sees.
LR normalizes leaked entities by the count outside history; PureLR by all
query entities.  Rewrites produced with the document in the prompt should
audit strictly worse than rewrites produced without it.
"""

from rewritekit import ToyTaskConfig, attach_mock_rewrites, dataset_leakage, generate_toytask

task = generate_toytask(ToyTaskConfig(n_train=300, n_test=0, seed=7))
records = attach_mock_rewrites(task.train)

print(f"{'variant':<12} {'Avg_LR':>8} {'Avg_PureLR':>11}")
for variant in ("manual", "syn_unseen", "syn_seen"):
    report = dataset_leakage(records, variant, corpus=task.corpus)
    print(f"{variant:<12} {report.avg_lr:>8.4f} {report.avg_pure_lr:>11.4f}")

report = dataset_leakage(records, "syn_seen", corpus=task.corpus)
leaky = [r for r in report.records if r.lr > 0]
worst = max(leaky, key=lambda r: r.lr)
record = next(r for r in records if r.record_id == worst.record_id)
print(f"\nworst offender ({worst.record_id}, LR={worst.lr:.2f}):")
print(f"  query:   {record.query!r}")
print(f"  rewrite: {record.rewrite('syn_seen')!r}")
print(f"  history: {[t.question for t in record.history]}")
