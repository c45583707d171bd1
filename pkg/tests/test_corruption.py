import json
import random

import pytest

from gecforge.corpus_io import SentencePair
from gecforge.corruption import (
    OP_KINDS,
    CorruptionConfig,
    CorruptionPlan,
    OpsPerSentence,
    PlanError,
    PlanStep,
    SentenceTooLong,
    alphabet_of,
    apply_plan,
    corrupt_pairs,
    corrupt_sentence,
)

TITLE = "A Simple Recipe for Multilingual Grammatical Error Correction"


def make_sentences(n, seed=11):
    rng = random.Random(seed)
    words = ["The", "quick", "brown", "fox", "jumps", "over", "a", "lazy",
             "dog", "again", "Sentence", "tokens", "vary", "in", "Case"]
    return [
        " ".join(rng.choice(words) for _ in range(rng.randint(3, 12)))
        for _ in range(n)
    ]


def test_forced_pass_through():
    config = CorruptionConfig(p_uncorrupted=1.0, seed=5)
    pair, plan = corrupt_sentence("Hello there world", None, config, 3)
    assert pair.source == pair.target == "Hello there world"
    assert plan.pass_through and plan.steps == ()


def test_determinism_same_inputs_same_outputs():
    config = CorruptionConfig(seed=42)
    first = corrupt_sentence("The quick brown fox jumps", None, config, 17)
    second = corrupt_sentence("The quick brown fox jumps", None, config, 17)
    assert first == second


def test_record_index_changes_the_stream():
    config = CorruptionConfig(seed=42)
    outputs = {
        corrupt_sentence("The quick brown fox jumps over", None, config, i)[0].source
        for i in range(30)
    }
    assert len(outputs) > 1


def test_processing_order_cannot_change_outputs():
    config = CorruptionConfig(seed=9)
    sentences = make_sentences(50)
    in_order = {
        i: corrupt_sentence(s, None, config, i) for i, s in enumerate(sentences)
    }
    shuffled = list(enumerate(sentences))
    random.Random(1).shuffle(shuffled)
    for i, sentence in shuffled:
        assert corrupt_sentence(sentence, None, config, i) == in_order[i]


def test_target_is_always_the_input_verbatim():
    config = CorruptionConfig(seed=3)
    for i, sentence in enumerate(make_sentences(200)):
        pair, _ = corrupt_sentence(sentence, None, config, i)
        assert pair.target == sentence


def test_plan_replay_reproduces_source_1000_cases():
    config = CorruptionConfig(seed=1234)
    sentences = make_sentences(1000)
    ok = 0
    for i, sentence in enumerate(sentences):
        pair, plan = corrupt_sentence(sentence, None, config, i)
        if apply_plan(sentence, plan) == pair.source:
            ok += 1
    assert ok == 1000


def test_alphabet_closure():
    config = CorruptionConfig(seed=77)
    passage = " ".join(make_sentences(5, seed=21))
    alphabet = alphabet_of(passage)
    for i, sentence in enumerate(make_sentences(300, seed=21)):
        allowed = alphabet | set(sentence) | {" "}
        pair, _ = corrupt_sentence(sentence, alphabet, config, i)
        assert set(pair.source) <= allowed


def test_inserted_characters_come_only_from_the_alphabet():
    config = CorruptionConfig(
        seed=8,
        op_weights={"insert_chars": 1.0},
        ops_per_sentence=OpsPerSentence(mean=3.0, cap=5),
    )
    alphabet = frozenset("xyz")
    for i in range(100):
        pair, plan = corrupt_sentence("a b c d e", alphabet, config, i)
        for step in plan.steps:
            assert set(step.chars) <= set("xyz")


def test_empty_plan_is_identity():
    plan = CorruptionPlan(record_id=0, pass_through=False, steps=())
    assert apply_plan("Hello world", plan) == "Hello world"


def test_lowercase_word_single_step():
    plan = CorruptionPlan(
        record_id=0, pass_through=False,
        steps=(PlanStep("lowercase_word", (0,)),))
    assert apply_plan("Hello world", plan) == "hello world"


def test_uppercase_first_single_step():
    plan = CorruptionPlan(
        record_id=0, pass_through=False,
        steps=(PlanStep("uppercase_first", (1,)),))
    assert apply_plan("hello world", plan) == "hello World"


def test_casing_no_op_on_uncased_text_is_still_valid():
    plan = CorruptionPlan(
        record_id=0, pass_through=False,
        steps=(PlanStep("lowercase_word", (0,)),))
    assert apply_plan("123 456", plan) == "123 456"


def test_drop_and_swap_primitives():
    assert apply_plan(
        "a b c d",
        CorruptionPlan(0, False, (PlanStep("drop_token_span", (1,), length=2),)),
    ) == "a d"
    assert apply_plan(
        "a b c",
        CorruptionPlan(0, False, (PlanStep("swap_tokens", (0, 2)),)),
    ) == "c b a"
    assert apply_plan(
        "abcd",
        CorruptionPlan(0, False, (PlanStep("drop_char_span", (1,), length=2),)),
    ) == "ad"
    assert apply_plan(
        "abcd",
        CorruptionPlan(0, False, (PlanStep("swap_chars", (0, 3)),)),
    ) == "dbca"
    assert apply_plan(
        "ad",
        CorruptionPlan(0, False, (PlanStep("insert_chars", (1,), chars="bc"),)),
    ) == "abcd"


def test_out_of_range_step_names_the_step_index():
    plan = CorruptionPlan(
        record_id=0, pass_through=False,
        steps=(
            PlanStep("lowercase_word", (0,)),
            PlanStep("drop_token_span", (9,), length=1),
        ))
    with pytest.raises(PlanError, match="step 1"):
        apply_plan("Hello world", plan)


def test_title_corruption_is_reachable_under_the_plan_grammar():
    # The target corruption drops the article, lowercases the third word,
    # drops two characters inside the long word, and swaps the final two
    # tokens. Reachability is a plan-grammar property, not a seed property.
    plan = CorruptionPlan(
        record_id=0,
        pass_through=False,
        steps=(
            PlanStep("drop_token_span", (0,), length=1),
            PlanStep("lowercase_word", (1,)),
            PlanStep("drop_char_span", (23,), length=2),
            PlanStep("swap_tokens", (5, 6)),
        ),
    )
    assert apply_plan(TITLE, plan) == (
        "Simple recipe for Multingual Grammatical Correction Error"
    )


def test_swap_tokens_preserves_token_multiset():
    config = CorruptionConfig(seed=6, op_weights={"swap_tokens": 1.0})
    for i in range(50):
        sentence = " ".join(make_sentences(1, seed=i))
        pair, _ = corrupt_sentence(sentence, None, config, i)
        assert sorted(pair.source.split()) == sorted(sentence.split())


def test_casing_ops_preserve_token_and_character_counts():
    config = CorruptionConfig(
        seed=60, op_weights={"lowercase_word": 1.0, "uppercase_first": 1.0})
    for i in range(50):
        sentence = " ".join(make_sentences(1, seed=100 + i))
        pair, _ = corrupt_sentence(sentence, None, config, i)
        assert len(pair.source.split()) == len(sentence.split())
        assert len(pair.source) == len(sentence)


def test_pass_through_rate_rough_band():
    config = CorruptionConfig(p_uncorrupted=0.5, seed=2)
    hits = sum(
        corrupt_sentence("a quick test sentence", None, config, i)[1].pass_through
        for i in range(2000)
    )
    assert 0.45 <= hits / 2000 <= 0.55


def test_sentence_must_be_non_empty():
    with pytest.raises(ValueError, match="non-empty"):
        corrupt_sentence("", None, CorruptionConfig(), 0)


def test_byte_cap_raises_sentence_too_long():
    long_sentence = "word " * 2000
    with pytest.raises(SentenceTooLong):
        corrupt_sentence(long_sentence.strip(), None, CorruptionConfig(), 0)
    # a custom cap allows it
    pair, _ = corrupt_sentence(
        long_sentence.strip(), None, CorruptionConfig(), 0, max_bytes=20_000)
    assert pair.target == long_sentence.strip()


def test_corrupt_pairs_skips_with_report():
    config = CorruptionConfig(seed=1)
    pairs = [
        SentencePair(0, "en", "fine sentence here"),
        SentencePair(1, "en", "x" * 5000),
        SentencePair(2, "en", "another fine one"),
    ]
    rejected = []
    out = list(corrupt_pairs(pairs, config, on_reject=lambda p, r: rejected.append(p.id)))
    assert [pair.id for pair, _ in out] == [0, 2]
    assert rejected == [1]
    assert len(out) + len(rejected) == len(pairs)


def test_config_validation_messages():
    with pytest.raises(ValueError, match="op_weights must be non-negative"):
        CorruptionConfig(op_weights={"swap_tokens": -1.0}).validate()
    with pytest.raises(ValueError, match="p_uncorrupted"):
        CorruptionConfig(p_uncorrupted=1.5).validate()
    with pytest.raises(ValueError, match="at least one positive"):
        CorruptionConfig(op_weights={k: 0.0 for k in OP_KINDS}).validate()
    with pytest.raises(ValueError, match="unknown operation kind"):
        CorruptionConfig(op_weights={"drop_vowels": 1.0}).validate()
    with pytest.raises(ValueError, match="seed"):
        CorruptionConfig(seed=2 ** 64).validate()


def test_config_json_round_trip():
    config = CorruptionConfig(
        p_uncorrupted=0.05,
        op_weights={"swap_tokens": 2.0, "insert_chars": 1.0},
        ops_per_sentence=OpsPerSentence(mean=3.0, cap=4),
        max_token_span=2,
        max_char_span=3,
        seed=99,
    )
    assert CorruptionConfig.from_json(config.to_json()) == config


def test_config_unknown_key_is_an_error():
    with pytest.raises(ValueError, match="unknown config key: 'p_uncorupted'"):
        CorruptionConfig.from_json(json.dumps({"p_uncorupted": 0.02}))
    with pytest.raises(ValueError, match="unknown ops_per_sentence key"):
        CorruptionConfig.from_json(
            json.dumps({"ops_per_sentence": {"mean": 2, "cap": 5, "mode": "x"}}))


def test_plan_json_round_trip():
    config = CorruptionConfig(seed=31)
    _, plan = corrupt_sentence("Round trip me please now", None, config, 12)
    assert CorruptionPlan.from_dict(json.loads(json.dumps(plan.to_dict()))) == plan


def test_pass_through_plan_rejects_steps():
    with pytest.raises(ValueError, match="pass-through"):
        CorruptionPlan(record_id=0, pass_through=True,
                       steps=(PlanStep("swap_tokens", (0, 1)),))


def test_alphabet_of_is_case_closed_and_excludes_breaks():
    alphabet = alphabet_of("Dog\truns\nhome")
    assert "d" in alphabet and "D" in alphabet
    assert "R" in alphabet and "r" in alphabet
    assert "\t" not in alphabet and "\n" not in alphabet


def test_equal_configs_corrupt_identically_regardless_of_weight_order():
    forward = CorruptionConfig(
        seed=4, op_weights={"swap_tokens": 1.0, "drop_char_span": 2.0})
    backward = CorruptionConfig(
        seed=4, op_weights={"drop_char_span": 2.0, "swap_tokens": 1.0})
    assert forward == backward
    for i in range(50):
        sentence = f"sentence number {i} with several words"
        assert corrupt_sentence(sentence, None, forward, i) == \
            corrupt_sentence(sentence, None, backward, i)


def test_record_index_must_be_unsigned():
    with pytest.raises(ValueError, match="record_index"):
        corrupt_sentence("a sentence", None, CorruptionConfig(), -1)
    with pytest.raises(ValueError, match="record_index"):
        corrupt_sentence("a sentence", None, CorruptionConfig(), 2 ** 64)
