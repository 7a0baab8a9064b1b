"""Toolkit for multi-turn query rewriting: synthesis, auditing, training, evaluation.

The pieces compose in pipeline order: ``data`` defines the JSONL record types,
``synthesis`` produces rewrites through an external provider, ``leakage``
audits them for answer leakage, ``retrieval``/``metrics`` score them,
``seq2seq``/``preference`` train a small rewriter on them, and ``rag`` runs
the whole rewrite/retrieve/generate loop with timing.  ``toytask`` generates
the synthetic fixture the end-to-end suites train on.
"""

from .data import (
    Corpus,
    DanglingReferenceError,
    DatasetError,
    DialogueTurn,
    Document,
    EntityAnnotation,
    QueryRecord,
    dumps_record,
    load_corpus,
    load_dataset,
    make_record,
    record_to_dict,
    resolve_positive,
    save_dataset,
    with_rewrite,
)
from .leakage import (
    BUILTIN_EXTRACTOR,
    EntityExtractor,
    LeakageReport,
    LeakageStats,
    dataset_leakage,
    extract_entities,
    extract_entity_spans,
    leakage_for_record,
    load_sidecar,
    record_entity_sets,
)
from .metrics import (
    MetricReport,
    bleu_4,
    cosine_matrix,
    exact_match,
    mean_token_length,
    normalize_answer,
    rouge_l,
    rouge_n,
    score_corpus,
    tokenize,
)
from .preference import (
    BUNDLE_FIELDS,
    FeedbackEnv,
    LogProbBundle,
    PairBuildConfig,
    PrefLossConfig,
    PreferencePair,
    SftConfig,
    TrainingHistory,
    apo_loss,
    apo_zero_loss,
    build_preference_pairs,
    dpo_loss,
    encode_sft_dataset,
    load_pairs,
    preference_loss,
    preference_margin_stats,
    save_pairs,
    score_candidate,
    sft_loss,
    train_preference,
    train_sft,
)
from .rag import (
    GoldDocReport,
    RagConfig,
    RagReport,
    RecordOutput,
    RewriterSpec,
    comparison_table,
    doc_body_text,
    eval_gold_docs,
    extractive_generate,
    llm_generator,
    load_report,
    render_report,
    report_from_dict,
    resolve_rewriter,
    run_rag,
    split_sentences,
    write_report,
)
from .retrieval import (
    EmptyTextError,
    FlatIndex,
    HashedTfidf,
    PrecomputedEmbeddings,
    RetrievalReport,
    RetrievalResult,
    build_index,
    doc_text,
    evaluate_retrieval,
    mrr_at_k,
    search,
)
from .seq2seq import (
    OptimConfig,
    OptimState,
    TinySeq2Seq,
    Vocab,
    adam_step,
    load_checkpoint,
    lr_at,
    save_checkpoint,
    sequence_logprob,
    serialize_rewrite_input,
)
from .synthesis import (
    CallableProvider,
    HttpProvider,
    PromptTemplate,
    SynthesisJob,
    SynthesisResult,
    default_template,
    mock_provider,
    mock_resolve,
    render_prompt,
    synthesize,
)
from .toytask import (
    ToyTask,
    ToyTaskConfig,
    attach_mock_rewrites,
    attach_model_rewrites,
    generate_toytask,
    save_toytask,
    sequence_exact_match,
)

__version__ = "0.1.0"
