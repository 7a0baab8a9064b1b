import math

import numpy as np
import pytest

from rewritekit import (
    Corpus,
    Document,
    FeedbackEnv,
    HashedTfidf,
    LogProbBundle,
    PairBuildConfig,
    PrefLossConfig,
    PreferencePair,
    SftConfig,
    TinySeq2Seq,
    Vocab,
    apo_loss,
    apo_zero_loss,
    build_index,
    build_preference_pairs,
    doc_text,
    dpo_loss,
    encode_sft_dataset,
    load_pairs,
    make_record,
    preference_loss,
    preference_margin_stats,
    save_pairs,
    sequence_logprob,
    sft_loss,
    train_preference,
    train_sft,
    with_rewrite,
)
from rewritekit.preference import BUNDLE_FIELDS
from reference_impls import rel_err

CONFIG = PrefLossConfig(beta=0.3)


def _rand_bundle(rng):
    values = sorted(-rng.uniform(0.2, 6.0) for _ in range(6))
    keys = list(BUNDLE_FIELDS)
    rng.shuffle(keys)
    return LogProbBundle(**dict(zip(keys, values)))


def test_bundle_validation():
    with pytest.raises(ValueError):
        LogProbBundle(d_theta_plus=0.5, d_theta_minus=-1.0)
    with pytest.raises(ValueError):
        LogProbBundle(d_theta_plus=float("nan"), d_theta_minus=-1.0)
    bundle = LogProbBundle(d_theta_plus=-1.0, d_theta_minus=-2.0)
    assert bundle.d_ref_plus == 0.0 and bundle.d_anc_minus == 0.0


def test_dpo_anchor_is_ln2():
    for plus, minus in ((-1.2, -2.7), (-0.01, -9.0), (-5.5, -5.5)):
        bundle = LogProbBundle(plus, minus, plus, minus, plus, minus)
        loss, grads = dpo_loss(bundle, CONFIG)
        assert abs(loss - math.log(2.0)) <= 1e-12
        # at the symmetric point the gradient slope is beta/2
        assert abs(grads["d_theta_plus"] + 0.15) <= 1e-12
        assert abs(grads["d_theta_minus"] - 0.15) <= 1e-12


def test_apo_zero_anchor_is_one():
    for plus, minus in ((-1.2, -2.7), (-3.3, -0.4)):
        bundle = LogProbBundle(plus, minus, -1.0, -1.0, plus, minus)
        loss, _ = apo_zero_loss(bundle, CONFIG)
        assert abs(loss - 1.0) <= 1e-12


def test_apo_equals_dpo_when_anchor_is_reference():
    rng = np.random.default_rng(55)
    for _ in range(100):
        plus, minus, base_plus, base_minus = -rng.uniform(0.2, 6.0, size=4)
        bundle = LogProbBundle(plus, minus, base_plus, base_minus, base_plus, base_minus)
        apo_value, apo_grads = apo_loss(bundle, CONFIG)
        dpo_value, dpo_grads = dpo_loss(bundle, CONFIG)
        assert apo_value == dpo_value
        # policy gradients agree; the baseline gradient lands on the anchor
        # fields for apo and on the reference fields for dpo
        assert apo_grads["d_theta_plus"] == dpo_grads["d_theta_plus"]
        assert apo_grads["d_theta_minus"] == dpo_grads["d_theta_minus"]
        assert apo_grads["d_anc_plus"] == dpo_grads["d_ref_plus"]
        assert apo_grads["d_ref_plus"] == 0.0 and dpo_grads["d_anc_plus"] == 0.0


def test_loss_gradients_match_finite_differences():
    rng = np.random.default_rng(56)
    eps = 1e-6
    for variant, fn in (("dpo", dpo_loss), ("apo", apo_loss), ("apo_zero", apo_zero_loss)):
        config = PrefLossConfig(beta=0.3, variant=variant)
        for _ in range(40):
            bundle = _rand_bundle(rng)
            _, grads = fn(bundle, config)
            for name in BUNDLE_FIELDS:
                up = dict(bundle.__dict__)
                down = dict(bundle.__dict__)
                up[name] += eps
                down[name] -= eps
                fd = (fn(LogProbBundle(**up), config)[0] - fn(LogProbBundle(**down), config)[0]) / (2 * eps)
                assert abs(grads[name] - fd) <= 1e-8 * max(1.0, abs(fd)), (variant, name)


def test_dpo_decreases_with_margin():
    # raising the policy's preferred-completion odds lowers the loss
    weak = LogProbBundle(-2.0, -2.0, -2.0, -2.0)
    strong = LogProbBundle(-1.0, -3.0, -2.0, -2.0)
    assert dpo_loss(strong, CONFIG)[0] < dpo_loss(weak, CONFIG)[0]


def test_preference_loss_dispatch():
    bundle = LogProbBundle(-1.0, -2.0)
    for variant in ("dpo", "apo", "apo_zero"):
        config = PrefLossConfig(variant=variant)
        loss, grads = preference_loss(bundle, config)
        assert math.isfinite(loss) and set(grads) == set(BUNDLE_FIELDS)
    with pytest.raises(ValueError):
        PrefLossConfig(variant="orpo")


def _tiny_vocab():
    return Vocab.build(["alpha beta gamma delta epsilon zeta"], max_size=32)


def test_sft_loss_matches_manual_nll_and_gradients():
    vocab = _tiny_vocab()
    model = TinySeq2Seq(vocab, d=6, seed=3)
    batch = [([4, 5], [6, 7]), ([5, 6], [4])]
    loss, grads = sft_loss(model, batch)
    manual = -(sequence_logprob(model, [4, 5], [6, 7]) + sequence_logprob(model, [5, 6], [4])) / 2
    assert abs(loss - manual) < 1e-12

    eps = 1e-5
    rng = np.random.default_rng(8)
    for key in ("embed", "dec_wh", "out_w"):
        flat = model.params[key].reshape(-1)
        gflat = grads[key].reshape(-1)
        for i in rng.choice(flat.size, size=6, replace=False):
            orig = flat[i]
            flat[i] = orig + eps
            up, _ = sft_loss(model, batch)
            flat[i] = orig - eps
            down, _ = sft_loss(model, batch)
            flat[i] = orig
            fd = (up - down) / (2 * eps)
            assert rel_err(float(gflat[i]), fd) <= 1e-4


def test_encode_sft_dataset():
    record = make_record("r1", [("q one", "a one")], "query word", manual_rewrite="alpha beta")
    vocab = Vocab.build(["<q> <a> <query> q one a alpha beta query word"])
    dataset = encode_sft_dataset([record], "manual", vocab)
    assert len(dataset) == 1
    input_ids, target_ids = dataset[0]
    assert input_ids == vocab.encode("<q> q one <a> a one <query> query word")
    assert target_ids == vocab.encode_target("alpha beta")


def test_train_sft_learns_and_is_deterministic():
    vocab = _tiny_vocab()
    dataset = [
        (vocab.encode("alpha beta"), vocab.encode_target("gamma")),
        (vocab.encode("beta alpha"), vocab.encode_target("delta")),
    ]
    config = SftConfig(lr=3e-2, epochs=200, schedule="constant", warmup_ratio=0.0)

    model = TinySeq2Seq(vocab, d=8, seed=5)
    history = train_sft(model, dataset, config)
    assert history.kind == "sft"
    assert len(history.epoch_losses) == 200
    assert history.epoch_losses[-1] < 0.1
    assert not history.aborted
    assert model.generate(vocab.encode("alpha beta"), max_len=3) == vocab.encode_target("gamma")
    assert model.generate(vocab.encode("beta alpha"), max_len=3) == vocab.encode_target("delta")

    twin = TinySeq2Seq(vocab, d=8, seed=5)
    train_sft(twin, dataset, config)
    for key in model.params:
        assert np.array_equal(model.params[key], twin.params[key])


def test_pair_validation_and_roundtrip(tmp_path):
    with pytest.raises(ValueError):
        PreferencePair("i", "same", "same", 1.0, 0.5)
    with pytest.raises(ValueError):
        PreferencePair("i", "a", "b", 0.1, 0.5)
    pairs = [
        PreferencePair("in one", "good text", "bad text", 0.9, 0.2),
        PreferencePair("in two", "better", "worse", 0.7, 0.6),
    ]
    assert abs(pairs[0].margin - 0.7) < 1e-12
    path = tmp_path / "pairs.jsonl"
    save_pairs(pairs, path)
    assert load_pairs(path) == pairs
    first = path.read_bytes()
    save_pairs(load_pairs(path), path)
    assert path.read_bytes() == first


def _toy_env():
    docs = [
        Document("d0", "Harbor Fort", "Harbor Fort stands by the sea. It opened in 1900."),
        Document("d1", "Stone Abbey", "Stone Abbey rests inland. Monks founded it."),
        Document("d2", "Iron Bridge", "Iron Bridge crosses the gorge. It carries trains."),
    ]
    corpus = Corpus(docs)
    provider = HashedTfidf().fit(doc_text(d) for d in corpus)
    return FeedbackEnv(
        corpus=corpus, index=build_index(corpus, provider), provider=provider, k=3
    )


def _pair_records():
    records = [
        make_record(
            "r0",
            [("tell me about Harbor Fort", "Harbor Fort stands by the sea")],
            "when did it open",
            gold_answer="Harbor Fort opened in 1900.",
            pos_doc_id="d0",
            manual_rewrite="when did Harbor Fort open",
        ),
        make_record(
            "r1",
            [("tell me about Stone Abbey", "Stone Abbey rests inland")],
            "who founded it",
            gold_answer="Monks founded Stone Abbey.",
            pos_doc_id="d1",
            manual_rewrite="who founded Stone Abbey",
        ),
    ]
    return records


def _pair_model():
    records = _pair_records()
    from rewritekit import serialize_rewrite_input

    texts = [serialize_rewrite_input(r) for r in records]
    texts += [r.rewrite("manual") for r in records]
    vocab = Vocab.build(texts)
    model = TinySeq2Seq(vocab, d=12, seed=2)
    dataset = encode_sft_dataset(records, "manual", vocab)
    train_sft(model, dataset, SftConfig(lr=1e-2, epochs=8))
    return model


def test_build_preference_pairs_is_deterministic():
    env = _toy_env()
    records = _pair_records()
    model = _pair_model()
    config = PairBuildConfig(n_candidates=6, threshold=0.0, seed=101)
    first = build_preference_pairs(records, model, env, config)
    second = build_preference_pairs(records, model, env, config)
    assert first.pairs == second.pairs
    assert first.n_records == 2
    assert (
        len(first.pairs) + first.n_skipped_identical + first.n_skipped_margin == 2
    )
    for pair in first.pairs:
        assert pair.score_chosen >= pair.score_rejected
        assert pair.chosen != pair.rejected

    # an impossible margin threshold filters every candidate pair
    strict = build_preference_pairs(
        records, model, env, PairBuildConfig(n_candidates=6, threshold=10.0, seed=101)
    )
    assert strict.pairs == []
    assert "skipped" in strict.summary()


def test_train_preference_raises_margin_and_keeps_checkpoint():
    model = _pair_model()
    vocab = model.vocab
    pairs = [
        PreferencePair("<query> when did it open", "when did Harbor Fort open", "when did it open", 0.9, 0.1),
        PreferencePair("<query> who founded it", "who founded Stone Abbey", "who founded it", 0.8, 0.2),
    ]
    frozen = {k: v.copy() for k, v in model.params.items()}
    config = PrefLossConfig(beta=0.3, epochs=4, batch_size=1, grad_accum=2, lr=1e-3)
    tuned, history = train_preference(model, pairs, config)
    for key in frozen:
        assert np.array_equal(model.params[key], frozen[key])  # checkpoint untouched
    assert history.kind == "dpo"
    assert history.steps > 0 and not history.aborted
    assert history.margin_after > history.margin_before
    after_stats = preference_margin_stats(tuned, pairs)
    assert abs(after_stats[0] - history.margin_after) < 1e-9
    assert 0.0 <= after_stats[1] <= 1.0


def test_train_preference_apo_zero_smoke():
    model = _pair_model()
    pairs = [
        PreferencePair("<query> when did it open", "when did Harbor Fort open", "when did it open", 0.9, 0.1),
    ]
    config = PrefLossConfig(variant="apo_zero", epochs=2, batch_size=1, grad_accum=1, lr=1e-3)
    tuned, history = train_preference(model, pairs, config)
    assert history.kind == "apo_zero"
    assert not history.aborted
    assert len(history.epoch_losses) == 2
