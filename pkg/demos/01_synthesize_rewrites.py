"""Generate standalone rewrites for conversational queries.

A multi-turn query like "when did it open ?" cannot be retrieved against on
its own; the referent lives in the dialogue history.  This demo builds a tiny
task, runs the deterministic mock provider under both annotation conditions,
and shows where the two conditions disagree: the "seen" condition gets the
gold document and answer in its prompt, so it can (and does) pull in entities
the history never mentioned.
"""

import tempfile
from pathlib import Path

from rewritekit import SynthesisJob, ToyTaskConfig, generate_toytask, mock_provider, synthesize

task = generate_toytask(ToyTaskConfig(n_train=8, n_test=0, n_places=6, seed=21))

with tempfile.TemporaryDirectory() as tmp:
    for condition in ("unseen", "seen"):
        job = SynthesisJob(
            records=task.train,
            condition=condition,
            provider=mock_provider(task.train, condition),
            cache_dir=Path(tmp) / "cache",
            corpus=task.corpus,
        )
        result = synthesize(job)
        print(f"== condition: {condition} ({result.provider_calls} provider calls, "
              f"{result.cache_hits} cache hits)")
        for record in task.train[:4]:
            print(f"  {record.query!r:40} -> {result.rewrites[record.record_id]!r}")
        print()

    # a second pass over the same inputs is served entirely from the cache
    job = SynthesisJob(
        records=task.train,
        condition="unseen",
        provider=mock_provider(task.train, "unseen"),
        cache_dir=Path(tmp) / "cache",
        corpus=task.corpus,
    )
    result = synthesize(job)
    print(f"rerun: {result.provider_calls} provider calls, {result.cache_hits} cache hits")
