"""Command-line entry point wiring the library modules into a pipeline.

Every run first writes a manifest (resolved config, input file hashes, seed,
tool version) next to its output, so any reported number can be traced back to
exact inputs.  Validation problems exit 1 with a message; argparse handles
unknown flags with the usual exit 2.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import (
    DanglingReferenceError,
    DatasetError,
    load_corpus,
    load_dataset,
    save_dataset,
    with_rewrite,
)
from .leakage import BUILTIN_EXTRACTOR, EntityExtractor, dataset_leakage, leakage_for_record
from .metrics import bleu_4, exact_match, rouge_l, rouge_n, tokenize
from .preference import (
    BUNDLE_FIELDS,
    FeedbackEnv,
    LogProbBundle,
    PairBuildConfig,
    PrefLossConfig,
    SftConfig,
    apo_loss,
    build_preference_pairs,
    dpo_loss,
    apo_zero_loss,
    encode_sft_dataset,
    load_pairs,
    preference_loss,
    save_pairs,
    train_preference,
    train_sft,
)
from .rag import (
    RagConfig,
    RewriterSpec,
    comparison_table,
    eval_gold_docs,
    load_report,
    run_rag,
    write_report,
)
from .retrieval import (
    FlatIndex,
    HashedTfidf,
    PrecomputedEmbeddings,
    build_index,
    doc_text,
    evaluate_retrieval,
    search,
)
from .seq2seq import (
    TinySeq2Seq,
    Vocab,
    load_checkpoint,
    save_checkpoint,
    serialize_rewrite_input,
)
from .synthesis import HttpProvider, PromptTemplate, SynthesisJob, mock_provider, synthesize


def _hash_path(path: Path) -> str:
    if path.is_dir():
        digest = hashlib.sha256()
        for child in sorted(path.rglob("*")):
            if child.is_file():
                digest.update(child.name.encode("utf-8"))
                digest.update(child.read_bytes())
        return digest.hexdigest()
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(command: str, args: argparse.Namespace, inputs: list, out: str) -> None:
    config = {
        k: str(v) if isinstance(v, Path) else v
        for k, v in sorted(vars(args).items())
        if k != "func" and v is not None
    }
    manifest = {
        "command": command,
        "version": __version__,
        "seed": getattr(args, "seed", None),
        "config": config,
        "input_hashes": {str(p): _hash_path(Path(p)) for p in inputs if p},
    }
    out_path = Path(out)
    if out_path.suffix:
        target = out_path.with_name(out_path.name + ".manifest.json")
        out_path.parent.mkdir(parents=True, exist_ok=True)
    else:
        out_path.mkdir(parents=True, exist_ok=True)
        target = out_path / "run.manifest.json"
    target.write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")


def _load_query_provider(index_dir: str, embeddings: str | None):
    if embeddings:
        return PrecomputedEmbeddings.load(embeddings)
    provider_file = Path(index_dir) / "provider.json"
    if not provider_file.exists():
        raise ValueError(
            f"{index_dir} has no provider.json; pass --embeddings with precomputed query vectors"
        )
    return HashedTfidf.from_dict(json.loads(provider_file.read_text(encoding="utf-8")))


# -- subcommands --


def _cmd_synthesize(args) -> int:
    records = load_dataset(args.dialogues, "dialogues")
    corpus = load_corpus(args.corpus) if args.corpus else None
    template = (
        PromptTemplate.from_file(args.condition, args.template) if args.template else None
    )
    _write_manifest("synthesize", args, [args.dialogues, args.corpus, args.template], args.out)
    if args.provider == "mock":
        provider = mock_provider(records, args.condition)
    else:
        provider = HttpProvider.from_env()
    job = SynthesisJob(
        records=records,
        condition=args.condition,
        provider=provider,
        cache_dir=Path(args.cache_dir),
        corpus=corpus,
        template=template,
        max_concurrency=args.max_concurrency,
        max_retries=args.max_retries,
    )
    result = synthesize(job)
    variant = f"syn_{args.condition}"
    out_records = [
        with_rewrite(r, variant, result.rewrites[r.record_id])
        if r.record_id in result.rewrites
        else r
        for r in records
    ]
    save_dataset(out_records, args.out)
    print(result.summary())
    return 1 if result.failures else 0


def _cmd_analyze_leakage(args) -> int:
    records = load_dataset(args.dialogues, "dialogues")
    corpus = load_corpus(args.corpus) if args.corpus else None
    _write_manifest(
        "analyze-leakage", args, [args.dialogues, args.corpus, args.entities], args.out
    )
    if args.entities:
        extractor = EntityExtractor(kind="sidecar_file", sidecar_path=Path(args.entities))
    else:
        extractor = BUILTIN_EXTRACTOR
    report = dataset_leakage(records, args.variant, extractor=extractor, corpus=corpus)
    Path(args.out).write_text(report.to_json(), encoding="utf-8")
    print(
        f"variant={report.variant} avg_lr={report.avg_lr:.4f} "
        f"avg_pure_lr={report.avg_pure_lr:.4f} records={len(report.records)}"
    )
    return 0


def _cmd_build_index(args) -> int:
    corpus = load_corpus(args.corpus)
    _write_manifest("build-index", args, [args.corpus, args.embeddings], args.out)
    if args.embeddings:
        provider = PrecomputedEmbeddings.load(args.embeddings)
    else:
        provider = HashedTfidf(dim=args.dim).fit(doc_text(d) for d in corpus)
    index = build_index(corpus, provider)
    index.save(args.out)
    if isinstance(provider, HashedTfidf):
        (Path(args.out) / "provider.json").write_text(
            json.dumps(provider.to_dict()), encoding="utf-8"
        )
    print(f"indexed {len(index)} documents at dim {index.dim}")
    return 0


def _cmd_eval_retrieval(args) -> int:
    records = load_dataset(args.dialogues, "dialogues")
    index = FlatIndex.load(args.index)
    provider = _load_query_provider(args.index, args.embeddings)
    _write_manifest("eval-retrieval", args, [args.dialogues, args.index], args.out)
    report = evaluate_retrieval(records, args.variant, index, provider, k=args.k)
    Path(args.out).write_text(report.to_json(), encoding="utf-8")
    print(
        f"MRR@{report.k} ({report.variant}) = {report.mrr:.2f} "
        f"over {report.n_queries} queries ({report.n_skipped} skipped)"
    )
    return 0


def _cmd_eval_generation(args) -> int:
    records = load_dataset(args.dialogues, "dialogues")
    corpus = load_corpus(args.corpus)
    _write_manifest(
        "eval-generation", args, [args.dialogues, args.corpus, args.index], args.out
    )
    if args.context == "gold":
        result = eval_gold_docs(records, args.variant, corpus)
        payload = {
            "context": "gold",
            "variant": args.variant,
            "metrics": result.metrics.to_dict(),
            "n_records": result.n_records,
            "n_failed": result.n_failed,
        }
        metrics = result.metrics
    else:
        if not args.index:
            raise ValueError("--context retrieved requires --index")
        index = FlatIndex.load(args.index)
        provider = _load_query_provider(args.index, args.embeddings)
        config = RagConfig(rewriter=RewriterSpec(kind="fixed_variant", variant=args.variant), k=args.k)
        report = run_rag(records, corpus, index, provider, config)
        payload = {
            "context": "retrieved",
            "variant": args.variant,
            "metrics": report.metrics.to_dict() if report.metrics else None,
            "n_records": report.n_records,
            "n_failed": report.n_failed,
        }
        metrics = report.metrics
    Path(args.out).write_text(
        json.dumps(payload, indent=2, ensure_ascii=False), encoding="utf-8"
    )
    if metrics:
        print(
            f"EM={metrics.em:.2f} ROUGE-L={metrics.rougeL:.2f} BLEU-4={metrics.bleu4:.2f} "
            f"over {metrics.n_samples} records"
        )
    return 0


def _cmd_train_sft(args) -> int:
    records = load_dataset(args.dialogues, "dialogues")
    _write_manifest("train-sft", args, [args.dialogues], args.out)
    texts = [serialize_rewrite_input(r) for r in records]
    texts.extend(r.rewrite(args.variant) for r in records)
    vocab = Vocab.build(texts, max_size=args.max_vocab)
    model = TinySeq2Seq(vocab, d=args.hidden, seed=args.seed)
    dataset = encode_sft_dataset(records, args.variant, vocab)
    config = SftConfig(
        lr=args.lr,
        epochs=args.epochs,
        batch_size=args.batch_size,
        warmup_ratio=args.warmup_ratio,
        schedule=args.schedule,
        shuffle_seed=args.seed + 1,
    )
    history = train_sft(model, dataset, config)
    save_checkpoint(model, args.out)
    (Path(args.out) / "history.json").write_text(history.to_json(), encoding="utf-8")
    losses = ", ".join(f"{x:.4f}" for x in history.epoch_losses)
    print(f"trained {history.steps} steps; epoch losses: {losses}")
    return 1 if history.aborted else 0


def _cmd_build_pairs(args) -> int:
    records = load_dataset(args.dialogues, "dialogues")
    corpus = load_corpus(args.corpus)
    index = FlatIndex.load(args.index)
    provider = _load_query_provider(args.index, args.embeddings)
    model = load_checkpoint(args.checkpoint)
    _write_manifest(
        "build-pairs", args, [args.dialogues, args.corpus, args.index, args.checkpoint], args.out
    )
    env = FeedbackEnv(corpus=corpus, index=index, provider=provider, k=args.k)
    config = PairBuildConfig(
        n_candidates=args.candidates,
        temperature=args.temperature,
        max_len=args.max_len,
        threshold=args.threshold,
        seed=args.seed,
    )
    result = build_preference_pairs(records, model, env, config)
    save_pairs(result.pairs, args.out)
    print(result.summary())
    return 0 if result.pairs else 1


def _cmd_train_pref(args) -> int:
    checkpoint = load_checkpoint(args.checkpoint)
    pairs = load_pairs(args.pairs)
    _write_manifest("train-pref", args, [args.checkpoint, args.pairs], args.out)
    config = PrefLossConfig(
        beta=args.beta,
        variant=args.loss,
        epochs=args.epochs,
        batch_size=args.batch_size,
        grad_accum=args.grad_accum,
        lr=args.lr,
        warmup_ratio=args.warmup_ratio,
        schedule=args.schedule,
        shuffle_seed=args.seed,
    )
    model, history = train_preference(checkpoint, pairs, config)
    save_checkpoint(model, args.out)
    (Path(args.out) / "history.json").write_text(history.to_json(), encoding="utf-8")
    print(
        f"margin {history.margin_before:.4f} -> {history.margin_after:.4f} "
        f"over {len(pairs)} pairs ({history.steps} steps)"
    )
    return 1 if history.aborted else 0


def _cmd_run_rag(args) -> int:
    records = load_dataset(args.dialogues, "dialogues")
    corpus = load_corpus(args.corpus)
    index = FlatIndex.load(args.index)
    provider = _load_query_provider(args.index, args.embeddings)
    _write_manifest(
        "run-rag", args, [args.dialogues, args.corpus, args.index], args.out
    )
    spec = RewriterSpec.parse(args.rewriter)
    config = RagConfig(rewriter=spec, k=args.k, max_len=args.max_len)
    report = run_rag(records, corpus, index, provider, config)
    write_report(report, args.out, fmt=args.format)
    mrr = f"{report.mrr:.2f}" if report.mrr is not None else "-"
    em = f"{report.metrics.em:.2f}" if report.metrics else "-"
    print(
        f"{report.label}: MRR@{report.k}={mrr} EM={em} "
        f"({report.n_records} records, {report.n_failed} failed)"
    )
    return 1 if report.n_failed else 0


def _cmd_report(args) -> int:
    reports = [load_report(p) for p in args.runs]
    text = comparison_table(reports, fmt=args.format)
    if args.out:
        _write_manifest("report", args, list(args.runs), args.out)
        Path(args.out).write_text(text, encoding="utf-8")
    print(text, end="" if text.endswith("\n") else "\n")
    return 0


# -- selftest: quick in-process oracle and gradient checks --


# Central differences at eps=1e-5 carry ~5e-10 absolute round-off for a loss
# of this magnitude; the denominator floor keeps that noise from failing
# near-zero gradients while a genuine factor-two error still trips the check.
_GRAD_FLOOR = 3e-5


def _rel_err(a: float, b: float) -> float:
    return abs(a - b) / max(_GRAD_FLOOR, abs(a) + abs(b))


def _check_gradients() -> list[str]:
    rng = np.random.default_rng(5)
    vocab = Vocab.build(["alpha beta gamma delta epsilon zeta"], max_size=32)
    model = TinySeq2Seq(vocab, d=6, seed=3)
    x = [4, 5, 6]
    y = [7, 8, 2]
    _, cache = model.forward(x, y)
    analytic = model.backward(cache, dlogp_coef=-1.0)
    eps = 1e-5
    errors = []
    for key, grad in analytic.items():
        flat = model.params[key].reshape(-1)
        gflat = grad.reshape(-1)
        idx = rng.choice(flat.size, size=min(8, flat.size), replace=False)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + eps
            up, _ = model.forward(x, y)
            flat[i] = orig - eps
            down, _ = model.forward(x, y)
            flat[i] = orig
            fd = -(up - down) / (2 * eps)
            if _rel_err(float(gflat[i]), fd) > 1e-4:
                errors.append(f"gradient mismatch in {key}[{i}]: {gflat[i]:.3e} vs {fd:.3e}")
    return errors


def _check_pref_losses() -> list[str]:
    errors = []
    config = PrefLossConfig(beta=0.3)
    same = LogProbBundle(-1.2, -2.7, -1.2, -2.7, -1.2, -2.7)
    loss, _ = dpo_loss(same, config)
    if abs(loss - float(np.log(2))) > 1e-12:
        errors.append(f"dpo at policy==reference gave {loss!r}, expected ln 2")
    loss, _ = apo_zero_loss(same, config)
    if abs(loss - 1.0) > 1e-12:
        errors.append(f"apo_zero at policy==initial gave {loss!r}, expected 1.0")
    rng = np.random.default_rng(11)
    for variant, fn in (("dpo", dpo_loss), ("apo", apo_loss), ("apo_zero", apo_zero_loss)):
        cfg = PrefLossConfig(beta=0.3, variant=variant)
        values = {f: float(-rng.uniform(0.5, 5.0)) for f in BUNDLE_FIELDS}
        _, grads = fn(LogProbBundle(**values), cfg)
        eps = 1e-6
        for name in BUNDLE_FIELDS:
            up = dict(values)
            up[name] += eps
            down = dict(values)
            down[name] -= eps
            fd = (fn(LogProbBundle(**up), cfg)[0] - fn(LogProbBundle(**down), cfg)[0]) / (2 * eps)
            if abs(grads[name] - fd) > 1e-8 * max(1.0, abs(fd)):
                errors.append(f"{variant} gradient mismatch on {name}")
    anchored = LogProbBundle(-1.0, -2.0, -1.5, -1.8, -1.5, -1.8)
    if apo_loss(anchored, config)[0] != dpo_loss(anchored, config)[0]:
        errors.append("apo with anchor==reference diverges from dpo")
    return errors


def _check_retrieval() -> list[str]:
    rng = np.random.default_rng(23)
    matrix = rng.normal(size=(200, 16))
    matrix /= np.linalg.norm(matrix, axis=1, keepdims=True)
    ids = [f"d{i:03d}" for i in range(200)]
    index = FlatIndex(doc_ids=ids, matrix=matrix)
    errors = []
    for qi in range(20):
        q = rng.normal(size=16)
        q /= np.linalg.norm(q)
        scores = index.matrix @ q.astype(np.float32)
        oracle = sorted(zip(ids, scores.tolist()), key=lambda t: (-t[1], t[0]))[:5]
        got = search(index, q, 5).ranked
        if [d for d, _ in got] != [d for d, _ in oracle]:
            errors.append(f"query {qi}: ranking differs from full-sort oracle")
    return errors


def _check_leakage() -> list[str]:
    rng = np.random.default_rng(31)
    universe = [f"e{i}" for i in range(12)]
    errors = []
    for trial in range(500):
        query = {e for e in universe if rng.random() < 0.3}
        history = {e for e in universe if rng.random() < 0.3}
        docans = {e for e in universe if rng.random() < 0.3}
        stats = leakage_for_record(query, history, docans, record_id=str(trial))
        n = len(query)
        m = sum(1 for e in query if e not in history)
        k = sum(1 for e in query if e in docans and e not in history)
        lr = k / m if m else 0.0
        pure = k / n if n else 0.0
        if (stats.n_query_entities, stats.m_not_in_history, stats.k_solely_from_docans) != (n, m, k):
            errors.append(f"trial {trial}: counts differ from brute force")
        elif stats.lr != lr or stats.pure_lr != pure:
            errors.append(f"trial {trial}: ratios differ from brute force")
    return errors


def _check_metrics() -> list[str]:
    errors = []
    cand, ref = tokenize("the cat sat on the mat"), tokenize("the cat sat on the mat")
    if rouge_n(cand, ref, 1) != 100.0 or bleu_4(cand, ref) != 100.0:
        errors.append("identical texts must score 100")
    if rouge_l(tokenize("a b c"), tokenize("a x c")) - 200.0 / 3.0 > 1e-9:
        errors.append("rouge_l hand value mismatch")
    if not exact_match("The  Cat!", "the cat"):
        errors.append("exact match must normalize case/punctuation/whitespace")
    return errors


def _cmd_selftest(args) -> int:
    checks = [
        ("gradient check", _check_gradients),
        ("preference losses", _check_pref_losses),
        ("retrieval oracle", _check_retrieval),
        ("leakage oracle", _check_leakage),
        ("metric anchors", _check_metrics),
    ]
    failed = 0
    for name, fn in checks:
        errors = fn()
        print(f"[{'ok' if not errors else 'FAIL'}] {name}")
        for err in errors[:5]:
            print(f"    {err}")
        failed += len(errors)
    return 0 if failed == 0 else 1


# -- parser wiring --


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rewritekit",
        description="Query-rewrite synthesis, leakage auditing, training, and RAG evaluation.",
    )
    parser.add_argument("--version", action="version", version=f"rewritekit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthesize", help="generate rewrites through a completion provider")
    p.add_argument("--dialogues", required=True)
    p.add_argument("--condition", choices=("unseen", "seen"), required=True)
    p.add_argument("--corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--cache-dir", default=".rewritekit-cache")
    p.add_argument("--provider", choices=("mock", "http"), default="http")
    p.add_argument("--template")
    p.add_argument("--max-concurrency", type=int, default=4)
    p.add_argument("--max-retries", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_synthesize)

    p = sub.add_parser("analyze-leakage", help="entity leakage ratios for one rewrite variant")
    p.add_argument("--dialogues", required=True)
    p.add_argument("--variant", required=True)
    p.add_argument("--corpus")
    p.add_argument("--entities", help="sidecar entity JSONL instead of the builtin extractor")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_analyze_leakage)

    p = sub.add_parser("build-index", help="embed a corpus into a flat inner-product index")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dim", type=int, default=512)
    p.add_argument("--embeddings", help="directory with precomputed document embeddings")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_build_index)

    p = sub.add_parser("eval-retrieval", help="MRR@k of one rewrite variant against an index")
    p.add_argument("--dialogues", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--variant", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--embeddings", help="directory with precomputed query embeddings")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_eval_retrieval)

    p = sub.add_parser("eval-generation", help="generation metrics with gold or retrieved context")
    p.add_argument("--dialogues", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--variant", required=True)
    p.add_argument("--context", choices=("gold", "retrieved"), default="gold")
    p.add_argument("--index")
    p.add_argument("--embeddings")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_eval_generation)

    p = sub.add_parser("train-sft", help="supervised training of the rewriter")
    p.add_argument("--dialogues", required=True)
    p.add_argument("--variant", default="manual")
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=2)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--batch-size", type=int, default=1)
    p.add_argument("--warmup-ratio", type=float, default=0.3)
    p.add_argument("--schedule", choices=("constant", "cosine", "linear"), default="cosine")
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--max-vocab", type=int, default=2000)
    p.add_argument("--seed", type=int, default=17)
    p.set_defaults(func=_cmd_train_sft)

    p = sub.add_parser("build-pairs", help="sample and score candidates into preference pairs")
    p.add_argument("--dialogues", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--candidates", type=int, default=8)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--threshold", type=float, default=0.05)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--max-len", type=int, default=32)
    p.add_argument("--embeddings")
    p.add_argument("--seed", type=int, default=101)
    p.set_defaults(func=_cmd_build_pairs)

    p = sub.add_parser("train-pref", help="preference-train from an SFT checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--pairs", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--loss", choices=("dpo", "apo", "apo_zero"), default="dpo")
    p.add_argument("--beta", type=float, default=0.3)
    p.add_argument("--epochs", type=int, default=4)
    p.add_argument("--batch-size", type=int, default=2)
    p.add_argument("--grad-accum", type=int, default=8)
    p.add_argument("--lr", type=float, default=1e-5)
    p.add_argument("--warmup-ratio", type=float, default=0.1)
    p.add_argument("--schedule", choices=("constant", "cosine", "linear"), default="linear")
    p.add_argument("--seed", type=int, default=29)
    p.set_defaults(func=_cmd_train_pref)

    p = sub.add_parser("run-rag", help="rewrite, retrieve, generate, and score end to end")
    p.add_argument("--dialogues", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--rewriter", required=True, help="none_raw | manual | variant:NAME | model:PATH")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--max-len", type=int, default=32)
    p.add_argument("--embeddings")
    p.add_argument("--format", choices=("json", "md", "csv"), default="json")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_run_rag)

    p = sub.add_parser("report", help="method-by-metrics table over saved run reports")
    p.add_argument("--runs", nargs="+", required=True)
    p.add_argument("--format", choices=("json", "md", "csv"), default="md")
    p.add_argument("--out")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("selftest", help="run the gradient-check and oracle suites")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_selftest)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DatasetError, DanglingReferenceError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
