"""Deterministic sentence corruption for synthetic (corrupted, original) pairs.

Every corruption is a pure function of (sentence, passage_alphabet, config,
record_index): the per-record random stream is seeded with a 64-bit hash of
(seed, record_index), so shuffling or sharding a corpus can never change any
output record. Each run additionally returns a CorruptionPlan that replays
to the corrupted text exactly, as an audit trail.

Seven primitive operations are supported: drop a span of tokens, swap two
tokens, drop a span of characters, swap two characters, insert characters
drawn from the passage alphabet, lowercase a word, and uppercase the first
character of a word. Tokens are maximal runs of non-whitespace; no language
tokenizer or spell dictionary is involved, so the engine works on any
language unchanged.
"""

from __future__ import annotations

import hashlib
import json
import random
import struct
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Mapping

from .corpus_io import SentencePair

OP_KINDS = (
    "drop_token_span",
    "swap_tokens",
    "drop_char_span",
    "swap_chars",
    "insert_chars",
    "lowercase_word",
    "uppercase_first",
)

DEFAULT_MAX_SENTENCE_BYTES = 4096

_NEVER_INSERT = frozenset("\t\n\r")


class SentenceTooLong(ValueError):
    """Sentence exceeds the corruption byte cap; callers skip-with-report."""


class PlanError(ValueError):
    """A plan step does not apply to the sentence state; names the step."""


def _simple_lower(ch: str) -> str:
    # Stand-in for Unicode simple case mapping: full mappings that change
    # string length (sharp-s expansion and friends) are exempted so plan
    # offsets stay exact; uncased characters map to themselves.
    low = ch.lower()
    return low if len(low) == 1 else ch


def _simple_upper(ch: str) -> str:
    up = ch.upper()
    return up if len(up) == 1 else ch


def alphabet_of(*texts: str) -> frozenset[str]:
    """Character alphabet of one or more texts, closed under simple case
    mapping and with line breaks and tabs excluded.

    Case closure keeps the alphabet a script-level notion: corrupting
    "dog" into "Dog" does not leave the passage's alphabet, while a
    Cyrillic character inserted into Latin text would.
    """
    chars: set[str] = set()
    for text in texts:
        chars.update(text)
    chars -= _NEVER_INSERT
    for ch in tuple(chars):
        chars.add(_simple_lower(ch))
        chars.add(_simple_upper(ch))
    return frozenset(chars)


@dataclass(frozen=True)
class OpsPerSentence:
    """Distribution of corruption steps per sentence: geometric on
    {1, 2, ...} with the given mean, truncated at cap."""

    distribution: str = "geometric"
    mean: float = 2.0
    cap: int = 5


@dataclass(frozen=True)
class CorruptionConfig:
    p_uncorrupted: float = 0.02
    op_weights: Mapping[str, float] = field(
        default_factory=lambda: {kind: 1.0 for kind in OP_KINDS}
    )
    ops_per_sentence: OpsPerSentence = field(default_factory=OpsPerSentence)
    max_token_span: int = 3
    max_char_span: int = 4
    seed: int = 0

    def validate(self) -> None:
        if not 0.0 <= self.p_uncorrupted <= 1.0:
            raise ValueError("p_uncorrupted must be in [0, 1]")
        for kind in self.op_weights:
            if kind not in OP_KINDS:
                raise ValueError(f"unknown operation kind in op_weights: {kind!r}")
        if any(w < 0 for w in self.op_weights.values()):
            raise ValueError("op_weights must be non-negative")
        if not any(w > 0 for w in self.op_weights.values()):
            raise ValueError("op_weights must contain at least one positive weight")
        if self.ops_per_sentence.distribution != "geometric":
            raise ValueError(
                f"unsupported ops_per_sentence distribution: {self.ops_per_sentence.distribution!r}"
            )
        if self.ops_per_sentence.mean < 1.0:
            raise ValueError("ops_per_sentence.mean must be >= 1")
        if self.ops_per_sentence.cap < 1:
            raise ValueError("ops_per_sentence.cap must be >= 1")
        if self.max_token_span < 1:
            raise ValueError("max_token_span must be >= 1")
        if self.max_char_span < 1:
            raise ValueError("max_char_span must be >= 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    def to_dict(self) -> dict:
        return {
            "p_uncorrupted": self.p_uncorrupted,
            "op_weights": dict(self.op_weights),
            "ops_per_sentence": {
                "distribution": self.ops_per_sentence.distribution,
                "mean": self.ops_per_sentence.mean,
                "cap": self.ops_per_sentence.cap,
            },
            "max_token_span": self.max_token_span,
            "max_char_span": self.max_char_span,
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: Mapping) -> "CorruptionConfig":
        # Unknown keys are an error so a typo can never silently fall back
        # to a default.
        known = {
            "p_uncorrupted", "op_weights", "ops_per_sentence",
            "max_token_span", "max_char_span", "seed",
        }
        for key in data:
            if key not in known:
                raise ValueError(f"unknown config key: {key!r}")
        kwargs: dict = {k: data[k] for k in known if k in data and k != "ops_per_sentence"}
        if "ops_per_sentence" in data:
            spec = data["ops_per_sentence"]
            for key in spec:
                if key not in ("distribution", "mean", "cap"):
                    raise ValueError(f"unknown ops_per_sentence key: {key!r}")
            kwargs["ops_per_sentence"] = OpsPerSentence(**spec)
        config = cls(**kwargs)
        config.validate()
        return config

    @classmethod
    def from_json(cls, text: str) -> "CorruptionConfig":
        data = json.loads(text)
        if not isinstance(data, dict):
            raise ValueError("config must be a JSON object")
        return cls.from_dict(data)


@dataclass(frozen=True)
class PlanStep:
    """One recorded corruption step. positions index into the sentence
    state at the moment the step applies: token indices for token ops,
    character offsets for character ops."""

    op: str
    positions: tuple[int, ...]
    length: int = 0
    chars: str = ""

    def to_dict(self) -> dict:
        return {
            "op": self.op,
            "positions": list(self.positions),
            "length": self.length,
            "chars": self.chars,
        }


@dataclass(frozen=True)
class CorruptionPlan:
    record_id: int
    pass_through: bool
    steps: tuple[PlanStep, ...] = ()

    def __post_init__(self) -> None:
        if self.pass_through and self.steps:
            raise ValueError("a pass-through plan must have no steps")

    def to_dict(self) -> dict:
        return {
            "id": self.record_id,
            "pass_through": self.pass_through,
            "steps": [step.to_dict() for step in self.steps],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "CorruptionPlan":
        return cls(
            record_id=data["id"],
            pass_through=data["pass_through"],
            steps=tuple(
                PlanStep(
                    op=s["op"],
                    positions=tuple(s["positions"]),
                    length=s.get("length", 0),
                    chars=s.get("chars", ""),
                )
                for s in data["steps"]
            ),
        )


def _apply_step(text: str, step: PlanStep, index: int) -> str:
    def bad(msg: str) -> PlanError:
        return PlanError(f"step {index}: {msg}")

    op = step.op
    if op in ("drop_token_span", "swap_tokens", "lowercase_word", "uppercase_first"):
        tokens = text.split()
        n = len(tokens)
        if op == "drop_token_span":
            (i,) = step.positions
            if not (0 <= i and i + step.length <= n and step.length >= 1):
                raise bad(f"token span [{i}, {i + step.length}) out of range for {n} tokens")
            del tokens[i:i + step.length]
        elif op == "swap_tokens":
            i, j = step.positions
            if not (0 <= i < n and 0 <= j < n):
                raise bad(f"token position out of range for {n} tokens")
            tokens[i], tokens[j] = tokens[j], tokens[i]
        elif op == "lowercase_word":
            (i,) = step.positions
            if not 0 <= i < n:
                raise bad(f"token position {i} out of range for {n} tokens")
            tokens[i] = "".join(_simple_lower(c) for c in tokens[i])
        else:
            (i,) = step.positions
            if not 0 <= i < n:
                raise bad(f"token position {i} out of range for {n} tokens")
            tokens[i] = _simple_upper(tokens[i][0]) + tokens[i][1:]
        return " ".join(tokens)

    n = len(text)
    if op == "drop_char_span":
        (i,) = step.positions
        if not (0 <= i and i + step.length <= n and step.length >= 1):
            raise bad(f"character span [{i}, {i + step.length}) out of range for {n} characters")
        return text[:i] + text[i + step.length:]
    if op == "swap_chars":
        i, j = step.positions
        if not (0 <= i < n and 0 <= j < n):
            raise bad(f"character position out of range for {n} characters")
        chars = list(text)
        chars[i], chars[j] = chars[j], chars[i]
        return "".join(chars)
    if op == "insert_chars":
        (i,) = step.positions
        if not 0 <= i <= n:
            raise bad(f"insertion offset {i} out of range for {n} characters")
        if not step.chars:
            raise bad("insert_chars step has no characters")
        return text[:i] + step.chars + text[i:]
    raise bad(f"unknown operation {op!r}")


def apply_plan(sentence: str, plan: CorruptionPlan) -> str:
    """Replay a recorded plan; reproduces corrupt_sentence's source exactly."""
    text = sentence
    for index, step in enumerate(plan.steps):
        text = _apply_step(text, step, index)
    return text


def _record_rng(seed: int, record_index: int) -> random.Random:
    digest = hashlib.blake2b(
        struct.pack("<QQ", seed, record_index), digest_size=8
    ).digest()
    return random.Random(int.from_bytes(digest, "little"))


def _sample_op_count(rng: random.Random, spec: OpsPerSentence) -> int:
    p = 1.0 / spec.mean
    k = 1
    while k < spec.cap and rng.random() >= p:
        k += 1
    return k


def _sample_step(
    rng: random.Random, text: str, alphabet: tuple[str, ...], config: CorruptionConfig
) -> PlanStep | None:
    tokens = text.split()
    n_tok = len(tokens)
    n_chr = len(text)

    # Canonical op order, not dict order: equal configs must corrupt
    # identically regardless of how their weight mapping was constructed.
    applicable: list[tuple[str, float]] = []
    for kind in OP_KINDS:
        weight = config.op_weights.get(kind, 0.0)
        if weight <= 0:
            continue
        if kind in ("drop_token_span", "swap_tokens") and n_tok < 2:
            continue
        if kind in ("drop_char_span", "swap_chars") and n_chr < 2:
            continue
        if kind in ("lowercase_word", "uppercase_first") and n_tok < 1:
            continue
        if kind == "insert_chars" and not alphabet:
            continue
        applicable.append((kind, weight))
    if not applicable:
        return None

    pick = rng.random() * sum(w for _, w in applicable)
    acc = 0.0
    op = applicable[-1][0]
    for kind, weight in applicable:
        acc += weight
        if pick < acc:
            op = kind
            break

    if op == "drop_token_span":
        length = rng.randint(1, min(config.max_token_span, n_tok - 1))
        i = rng.randint(0, n_tok - length)
        return PlanStep(op, (i,), length=length)
    if op == "swap_tokens":
        i = rng.randint(0, n_tok - 2)
        return PlanStep(op, (i, i + 1))
    if op == "drop_char_span":
        length = rng.randint(1, min(config.max_char_span, n_chr - 1))
        i = rng.randint(0, n_chr - length)
        return PlanStep(op, (i,), length=length)
    if op == "swap_chars":
        i = rng.randint(0, n_chr - 2)
        return PlanStep(op, (i, i + 1))
    if op == "insert_chars":
        count = rng.randint(1, config.max_char_span)
        chars = "".join(alphabet[rng.randrange(len(alphabet))] for _ in range(count))
        i = rng.randint(0, n_chr)
        return PlanStep(op, (i,), chars=chars)
    if op == "lowercase_word":
        return PlanStep(op, (rng.randint(0, n_tok - 1),))
    return PlanStep("uppercase_first", (rng.randint(0, n_tok - 1),))


def corrupt_sentence(
    sentence: str,
    passage_alphabet: Iterable[str] | None,
    config: CorruptionConfig,
    record_index: int,
    *,
    lang: str = "und",
    max_bytes: int = DEFAULT_MAX_SENTENCE_BYTES,
) -> tuple[SentencePair, CorruptionPlan]:
    """Corrupt one clean sentence into a (corrupted, original) training pair.

    The returned pair has source = corrupted text and target = the input
    sentence verbatim. With probability p_uncorrupted the sentence passes
    through unchanged (the model must learn that inputs can already be
    grammatical) and the plan is empty. Inserted characters come only from
    passage_alphabet, which defaults to the sentence's own case-closed
    character set when None.
    """
    if not sentence:
        raise ValueError("sentence must be non-empty")
    if not 0 <= record_index < 2 ** 64:
        raise ValueError("record_index must be an unsigned 64-bit integer")
    if len(sentence.encode("utf-8")) > max_bytes:
        raise SentenceTooLong(
            f"sentence of {len(sentence.encode('utf-8'))} bytes exceeds cap {max_bytes}"
        )
    config.validate()

    if passage_alphabet is None:
        alphabet = tuple(sorted(alphabet_of(sentence)))
    else:
        alphabet = tuple(sorted(set(passage_alphabet) - _NEVER_INSERT))
    if not alphabet:
        raise ValueError("passage_alphabet must be non-empty")

    rng = _record_rng(config.seed, record_index)
    if rng.random() < config.p_uncorrupted:
        pair = SentencePair(id=record_index, lang=lang, source=sentence, target=sentence)
        return pair, CorruptionPlan(record_id=record_index, pass_through=True)

    steps: list[PlanStep] = []
    text = sentence
    for _ in range(_sample_op_count(rng, config.ops_per_sentence)):
        step = _sample_step(rng, text, alphabet, config)
        if step is None:
            break
        text = _apply_step(text, step, len(steps))
        steps.append(step)

    pair = SentencePair(id=record_index, lang=lang, source=text, target=sentence)
    return pair, CorruptionPlan(record_id=record_index, pass_through=False, steps=tuple(steps))


def corrupt_pairs(
    pairs: Iterable[SentencePair],
    config: CorruptionConfig,
    *,
    max_bytes: int = DEFAULT_MAX_SENTENCE_BYTES,
    on_reject: Callable[[SentencePair, str], None] | None = None,
) -> Iterator[tuple[SentencePair, CorruptionPlan]]:
    """Corrupt a stream of clean sentences (each record's source field).

    The record id doubles as the record_index, so output is independent of
    processing order. Over-long or empty sentences are skipped via
    on_reject, never raised mid-stream.
    """
    config.validate()
    for pair in pairs:
        try:
            yield corrupt_sentence(
                pair.source, None, config, pair.id, lang=pair.lang, max_bytes=max_bytes
            )
        except (SentenceTooLong, ValueError) as exc:
            if on_reject is None:
                raise
            on_reject(pair, str(exc))
