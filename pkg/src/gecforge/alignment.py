"""Token-level minimal edit alignment and corpus edit-rate statistics.

Tokens are whatever the caller passes in (for corpus statistics: maximal
runs of non-whitespace). The alignment is the classic unit-cost Levenshtein
over tokens with a deterministic backtrace, so reruns are bit-stable.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .corpus_io import SentencePair

EQUAL = "equal"
SUB = "sub"
DEL = "del"
INS = "ins"


@dataclass(frozen=True)
class Run:
    """One maximal run of same-kind alignment ops.

    Spans are half-open: source tokens [src_start, src_end), target tokens
    [tgt_start, tgt_end). Del runs have an empty target span, Ins runs an
    empty source span, Sub runs are 1:1 so both spans have equal length.
    """

    kind: str
    src_start: int
    src_end: int
    tgt_start: int
    tgt_end: int

    def cost(self) -> int:
        if self.kind == EQUAL:
            return 0
        return max(self.src_end - self.src_start, self.tgt_end - self.tgt_start)


@dataclass(frozen=True)
class EditScript:
    ops: tuple[Run, ...]

    def cost(self) -> int:
        return sum(run.cost() for run in self.ops)

    def apply(self, source_tokens: Sequence[str], target_tokens: Sequence[str]) -> list[str]:
        """Replay the script against its source; must reproduce the target."""
        out: list[str] = []
        for run in self.ops:
            if run.kind == EQUAL:
                out.extend(source_tokens[run.src_start:run.src_end])
            else:
                out.extend(target_tokens[run.tgt_start:run.tgt_end])
        return out


def _dp_matrix(src: Sequence[str], tgt: Sequence[str]) -> list[list[int]]:
    n, m = len(src), len(tgt)
    dist = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        dist[i][0] = i
    for j in range(1, m + 1):
        dist[0][j] = j
    for i in range(1, n + 1):
        row = dist[i]
        prev = dist[i - 1]
        s = src[i - 1]
        for j in range(1, m + 1):
            if s == tgt[j - 1]:
                row[j] = prev[j - 1]
            else:
                row[j] = 1 + min(prev[j - 1], prev[j], row[j - 1])
    return dist


def _backtrace(src: Sequence[str], tgt: Sequence[str], dist: list[list[int]]) -> list[str]:
    """Op kinds in reverse order; ties broken Equal > Sub > Del > Ins."""
    i, j = len(src), len(tgt)
    ops: list[str] = []
    while i > 0 or j > 0:
        d = dist[i][j]
        if i > 0 and j > 0 and src[i - 1] == tgt[j - 1] and dist[i - 1][j - 1] == d:
            ops.append(EQUAL)
            i -= 1
            j -= 1
        elif i > 0 and j > 0 and dist[i - 1][j - 1] + 1 == d:
            ops.append(SUB)
            i -= 1
            j -= 1
        elif i > 0 and dist[i - 1][j] + 1 == d:
            ops.append(DEL)
            i -= 1
        else:
            ops.append(INS)
            j -= 1
    return ops


def levenshtein(a: Sequence, b: Sequence) -> int:
    """Unit-cost edit distance between two sequences."""
    if a == b:
        return 0
    return _dp_matrix(a, b)[len(a)][len(b)]


def align_tokens(source_tokens: Sequence[str], target_tokens: Sequence[str]) -> EditScript:
    """Minimal-cost alignment between two token sequences.

    A shared prefix and suffix are peeled off before the quadratic DP; the
    Equal-first backtrace would consume them as Equal runs anyway, so the
    result is identical and near-identical pairs align in linear time.
    """
    src = list(source_tokens)
    tgt = list(target_tokens)
    n, m = len(src), len(tgt)

    pre = 0
    while pre < n and pre < m and src[pre] == tgt[pre]:
        pre += 1
    suf = 0
    while suf < n - pre and suf < m - pre and src[n - 1 - suf] == tgt[m - 1 - suf]:
        suf += 1

    mid_src = src[pre:n - suf]
    mid_tgt = tgt[pre:m - suf]
    kinds = _backtrace(mid_src, mid_tgt, _dp_matrix(mid_src, mid_tgt))
    kinds.reverse()

    runs: list[Run] = []
    i, j = pre, pre

    def push(kind: str, di: int, dj: int) -> None:
        nonlocal i, j
        last = runs[-1] if runs else None
        if last is not None and last.kind == kind:
            runs[-1] = Run(kind, last.src_start, i + di, last.tgt_start, j + dj)
        else:
            runs.append(Run(kind, i, i + di, j, j + dj))
        i += di
        j += dj

    if pre:
        runs.append(Run(EQUAL, 0, pre, 0, pre))
    for kind in kinds:
        if kind == EQUAL:
            push(EQUAL, 1, 1)
        elif kind == SUB:
            push(SUB, 1, 1)
        elif kind == DEL:
            push(DEL, 1, 0)
        else:
            push(INS, 0, 1)
    if suf:
        push(EQUAL, suf, suf)

    return EditScript(ops=tuple(runs))


def pair_counts(pair: SentencePair) -> tuple[int, int, int, int, int]:
    """(n_src, n_tgt, sub, del, ins) token counts for one pair.

    Tokenization is whitespace runs. Sub counts max(a, b) tokens per Sub run
    (always a == b under unit-cost alignment), Del counts source tokens,
    Ins counts target tokens.
    """
    if pair.target is None:
        raise ValueError(f"statistics require a target (record {pair.id})")
    src = pair.source.split()
    tgt = pair.target.split()
    if src == tgt:
        return len(src), len(tgt), 0, 0, 0
    sub = dels = ins = 0
    for run in align_tokens(src, tgt).ops:
        if run.kind == SUB:
            sub += max(run.src_end - run.src_start, run.tgt_end - run.tgt_start)
        elif run.kind == DEL:
            dels += run.src_end - run.src_start
        elif run.kind == INS:
            ins += run.tgt_end - run.tgt_start
    return len(src), len(tgt), sub, dels, ins


@dataclass(frozen=True)
class CorpusStats:
    """Corpus-level length ratio and WER decomposition.

    lr is total source tokens over total target tokens as a percentage;
    wer, sub, del_, ins are percentages with denominator n_source_tokens
    (del_ carries a trailing underscore only because `del` is a keyword).
    Ratios are None when their denominator is zero.
    """

    n_pairs: int
    n_source_tokens: int
    n_target_tokens: int
    lr: float | None
    wer: float | None
    sub: float | None
    del_: float | None
    ins: float | None

    def to_dict(self) -> dict:
        return {
            "n_pairs": self.n_pairs,
            "n_source_tokens": self.n_source_tokens,
            "n_target_tokens": self.n_target_tokens,
            "lr": self.lr,
            "wer": self.wer,
            "sub": self.sub,
            "del": self.del_,
            "ins": self.ins,
        }


class StatsAccumulator:
    """Streaming count accumulator; merge is associative so partial sums
    from parallel shards can be combined in any order."""

    __slots__ = ("n_pairs", "n_source_tokens", "n_target_tokens", "sub", "dels", "ins")

    def __init__(self) -> None:
        self.n_pairs = 0
        self.n_source_tokens = 0
        self.n_target_tokens = 0
        self.sub = 0
        self.dels = 0
        self.ins = 0

    def add(self, pair: SentencePair) -> None:
        n_src, n_tgt, sub, dels, ins = pair_counts(pair)
        self.n_pairs += 1
        self.n_source_tokens += n_src
        self.n_target_tokens += n_tgt
        self.sub += sub
        self.dels += dels
        self.ins += ins

    def merge(self, other: "StatsAccumulator") -> "StatsAccumulator":
        self.n_pairs += other.n_pairs
        self.n_source_tokens += other.n_source_tokens
        self.n_target_tokens += other.n_target_tokens
        self.sub += other.sub
        self.dels += other.dels
        self.ins += other.ins
        return self

    def finalize(self) -> CorpusStats:
        # Percentages are computed once over the summed counts, never
        # averaged per sentence; round() is round-half-even.
        def pct(num: int, den: int) -> float | None:
            return round(100.0 * num / den, 2) if den else None

        return CorpusStats(
            n_pairs=self.n_pairs,
            n_source_tokens=self.n_source_tokens,
            n_target_tokens=self.n_target_tokens,
            lr=pct(self.n_source_tokens, self.n_target_tokens),
            wer=pct(self.sub + self.dels + self.ins, self.n_source_tokens),
            sub=pct(self.sub, self.n_source_tokens),
            del_=pct(self.dels, self.n_source_tokens),
            ins=pct(self.ins, self.n_source_tokens),
        )


def aggregate(pairs: Iterable[SentencePair]) -> CorpusStats:
    """Sum pair_counts over a pair stream and finalize percentages."""
    acc = StatsAccumulator()
    for pair in pairs:
        acc.add(pair)
    return acc.finalize()
