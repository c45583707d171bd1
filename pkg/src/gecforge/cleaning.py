"""Parallel-corpus cleaning: relabel targets via a rewriter service, or
score originals and keep the best fraction.

The rewriter and scorer are external HTTP services from this toolkit's
point of view; two built-in scorers (negated word error rate and a
character 5-gram language model) make the whole pipeline testable offline.
Failed records are never dropped silently: they go to a rejects callback
and the caller's exit status signals partial failure.
"""

from __future__ import annotations

import math
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable, Iterable, Iterator, Sequence

if TYPE_CHECKING:
    import requests

from .alignment import pair_counts
from .corpus_io import SentencePair

def _retryable(status: int) -> bool:
    return status == 429 or 500 <= status <= 599


@dataclass(frozen=True)
class ScoredPair:
    """A pair plus a finite quality score; higher is better."""

    pair: SentencePair
    score: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.score):
            raise ValueError(f"score must be finite, got {self.score!r} (record {self.pair.id})")


@dataclass(frozen=True)
class FilterConfig:
    """Keep the best keep_fraction of records, ties broken by ascending id."""

    keep_fraction: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 < self.keep_fraction <= 1.0:
            raise ValueError("keep_fraction must be in (0, 1]")


# Keep fractions complementing the disregard-the-lowest-N% grid.
FILTER_PRESETS = {
    "disregard20": FilterConfig(keep_fraction=0.8),
    "disregard50": FilterConfig(keep_fraction=0.5),
    "disregard70": FilterConfig(keep_fraction=0.3),
    "disregard90": FilterConfig(keep_fraction=0.1),
}


@dataclass(frozen=True)
class _Endpoint:
    base_url: str
    batch_size: int = 32
    timeout: float = 60.0
    max_retries: int = 3
    backoff_base: float = 1.0
    auth_token: str | None = None

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


class RewriterEndpoint(_Endpoint):
    path = "/rewrite"


class ScorerEndpoint(_Endpoint):
    path = "/score"


class BatchFailure(RuntimeError):
    """A whole request batch failed after retries or was malformed."""


def _post_batch(session: "requests.Session", endpoint: _Endpoint, items: list[dict]) -> list[dict]:
    import requests

    url = endpoint.base_url.rstrip("/") + endpoint.path
    headers = {}
    if endpoint.auth_token:
        headers["Authorization"] = f"Bearer {endpoint.auth_token}"
    last_error = "exhausted retries"
    for attempt in range(endpoint.max_retries + 1):
        if attempt:
            time.sleep(endpoint.backoff_base * 2 ** (attempt - 1))
        try:
            response = session.post(
                url, json={"items": items}, headers=headers, timeout=endpoint.timeout)
        except requests.RequestException as exc:
            last_error = f"request failed: {exc.__class__.__name__}"
            continue
        if _retryable(response.status_code):
            last_error = f"retryable status {response.status_code}"
            continue
        if response.status_code != 200:
            raise BatchFailure(f"non-retryable status {response.status_code}")
        try:
            body = response.json()
        except ValueError:
            raise BatchFailure("response is not JSON") from None
        got = body.get("items")
        if not isinstance(got, list):
            raise BatchFailure("response has no items list")
        if len(got) != len(items):
            raise BatchFailure(f"response count mismatch: sent {len(items)}, got {len(got)}")
        return got
    raise BatchFailure(last_error)


def _batched(pairs: Iterable[SentencePair], size: int) -> Iterator[list[SentencePair]]:
    batch: list[SentencePair] = []
    for pair in pairs:
        batch.append(pair)
        if len(batch) == size:
            yield batch
            batch = []
    if batch:
        yield batch


def _pipelined(
    pairs: Iterable[SentencePair],
    endpoint: _Endpoint,
    worker: Callable[[requests.Session, list[SentencePair]], list],
    on_reject: Callable[[SentencePair, str], None],
    in_flight: int,
) -> Iterator[list]:
    """Run batches through `worker` with at most `in_flight` outstanding
    requests; results come back in input order so downstream output stays
    sorted by id, and the bounded window gives backpressure."""
    import requests  # deferred so the CLI does not pay the import on every run

    session = requests.Session()
    with ThreadPoolExecutor(max_workers=max(1, in_flight)) as pool:
        window: deque = deque()

        def drain() -> Iterator[list]:
            batch, future = window.popleft()
            try:
                yield future.result()
            except BatchFailure as exc:
                for pair in batch:
                    on_reject(pair, str(exc))

        for batch in _batched(pairs, endpoint.batch_size):
            while len(window) >= max(1, in_flight):
                yield from drain()
            window.append((batch, pool.submit(worker, session, batch)))
        while window:
            yield from drain()


def relabel(
    pairs: Iterable[SentencePair],
    rewriter: RewriterEndpoint,
    *,
    on_reject: Callable[[SentencePair, str], None] | None = None,
    in_flight: int = 4,
) -> Iterator[SentencePair]:
    """Replace every target with the rewriter's output for the source.

    ids, order, lang and source text pass through verbatim. Batches that
    exhaust retries or return malformed responses are routed, record by
    record, to on_reject.
    """
    rejects = on_reject or _raise_reject

    def usable(stream: Iterable[SentencePair]) -> Iterator[SentencePair]:
        for pair in stream:
            if not pair.source:
                rejects(pair, "empty source")
            else:
                yield pair

    def worker(session: requests.Session, batch: list[SentencePair]) -> list[SentencePair]:
        items = [{"id": p.id, "lang": p.lang, "source": p.source} for p in batch]
        got = _post_batch(session, rewriter, items)
        by_id: dict[int, str] = {}
        for item in got:
            if not isinstance(item, dict) or "id" not in item or "target" not in item:
                raise BatchFailure("response item missing id or target")
            if not isinstance(item["target"], str):
                raise BatchFailure(f"non-string target for id {item['id']}")
            by_id[item["id"]] = item["target"]
        missing = [p.id for p in batch if p.id not in by_id]
        if missing:
            raise BatchFailure(f"response missing ids: {missing[:5]}")
        return [
            SentencePair(id=p.id, lang=p.lang, source=p.source, target=by_id[p.id])
            for p in batch
        ]

    for result in _pipelined(usable(pairs), rewriter, worker, rejects, in_flight):
        yield from result


def score_pairs(
    pairs: Iterable[SentencePair],
    scorer: ScorerEndpoint | Callable[[SentencePair], float],
    *,
    on_reject: Callable[[SentencePair, str], None] | None = None,
    in_flight: int = 4,
) -> Iterator[ScoredPair]:
    """Attach one finite score per record, id and order preserved.

    `scorer` is either a wire endpoint or any callable(pair) -> float
    (the built-ins below qualify).
    """
    rejects = on_reject or _raise_reject

    if not isinstance(scorer, ScorerEndpoint):
        for pair in pairs:
            try:
                yield ScoredPair(pair=pair, score=float(scorer(pair)))
            except ValueError as exc:
                rejects(pair, str(exc))
        return

    def usable(stream: Iterable[SentencePair]) -> Iterator[SentencePair]:
        for pair in stream:
            if pair.target is None:
                rejects(pair, "scoring requires a target")
            else:
                yield pair

    def worker(session: requests.Session, batch: list[SentencePair]) -> list[ScoredPair]:
        items = [
            {"id": p.id, "lang": p.lang, "source": p.source, "target": p.target}
            for p in batch
        ]
        got = _post_batch(session, scorer, items)
        by_id: dict[int, float] = {}
        for item in got:
            if not isinstance(item, dict) or "id" not in item or "score" not in item:
                raise BatchFailure("response item missing id or score")
            by_id[item["id"]] = item["score"]
        missing = [p.id for p in batch if p.id not in by_id]
        if missing:
            raise BatchFailure(f"response missing ids: {missing[:5]}")
        out: list[ScoredPair] = []
        for pair in batch:
            try:
                out.append(ScoredPair(pair=pair, score=float(by_id[pair.id])))
            except (TypeError, ValueError) as exc:
                raise BatchFailure(f"bad score for id {pair.id}: {exc}") from None
        return out

    for result in _pipelined(usable(pairs), scorer, worker, rejects, in_flight):
        yield from result


def _raise_reject(pair: SentencePair, reason: str) -> None:
    raise BatchFailure(f"record {pair.id} rejected: {reason}")


def filter_by_score(scored: Iterable[ScoredPair], config: FilterConfig) -> list[SentencePair]:
    """Keep exactly floor(keep_fraction * N + 0.5) records, the best under
    (score desc, id asc), re-sorted by id. Every retained score is >= every
    dropped score, with score ties resolved by id.

    This stage must materialize its input: ranking needs all scores.
    """
    items = list(scored)
    keep = int(math.floor(config.keep_fraction * len(items) + 0.5))
    ranked = sorted(items, key=lambda sp: (-sp.score, sp.pair.id))
    kept = ranked[:keep]
    kept.sort(key=lambda sp: sp.pair.id)
    return [sp.pair for sp in kept]


# Built-in scorers.

def neg_wer(pair: SentencePair) -> float:
    """Negated per-source-token edit rate of the target; 0.0 means the
    target equals the source, lower means a heavier rewrite."""
    n_src, _, sub, dels, ins = pair_counts(pair)
    return -(sub + dels + ins) / max(1, n_src)


class CharNgramScorer:
    """Character n-gram language model with add-one smoothing, trained on
    the corpus's own targets; scores are mean per-character log-probability
    (natural log), so longer strings are not penalized."""

    BOS = "\x02"
    EOS = "\x03"

    def __init__(self, order: int = 5):
        if order < 1:
            raise ValueError("order must be >= 1")
        self.order = order
        self._context: dict[str, int] = {}
        self._ngram: dict[str, int] = {}
        self._vocab: set[str] = set()
        self._fitted = False

    def fit(self, texts: Iterable[str]) -> "CharNgramScorer":
        for text in texts:
            padded = self.BOS * (self.order - 1) + text + self.EOS
            self._vocab.update(padded)
            for i in range(self.order - 1, len(padded)):
                context = padded[i - self.order + 1:i]
                self._context[context] = self._context.get(context, 0) + 1
                gram = padded[i - self.order + 1:i + 1]
                self._ngram[gram] = self._ngram.get(gram, 0) + 1
        self._fitted = True
        return self

    def score_text(self, text: str) -> float:
        if not self._fitted:
            raise RuntimeError("scorer must be fitted before scoring")
        vocab_size = len(self._vocab) + 1  # one slot for unseen characters
        padded = self.BOS * (self.order - 1) + text + self.EOS
        log_prob = 0.0
        events = 0
        for i in range(self.order - 1, len(padded)):
            context = padded[i - self.order + 1:i]
            gram = padded[i - self.order + 1:i + 1]
            numer = self._ngram.get(gram, 0) + 1
            denom = self._context.get(context, 0) + vocab_size
            log_prob += math.log(numer / denom)
            events += 1
        return log_prob / max(1, events)

    def __call__(self, pair: SentencePair) -> float:
        if pair.target is None:
            raise ValueError(f"scoring requires a target (record {pair.id})")
        return self.score_text(pair.target)


def char_lm_scorer(pairs: Sequence[SentencePair], order: int = 5) -> CharNgramScorer:
    """Fit the built-in character LM on the targets of `pairs`."""
    return CharNgramScorer(order=order).fit(
        p.target for p in pairs if p.target is not None)
