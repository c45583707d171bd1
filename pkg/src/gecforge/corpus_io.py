"""Corpus formats: streaming TSV parallel-pair I/O and paragraph splitting.

The corpus format is line-oriented TSV, UTF-8, U+000A terminated, no BOM,
no quoting: ``lang<TAB>source[<TAB>target]``. Fields with embedded tabs or
line breaks are invalid records and are rejected, never repaired.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable, Iterator

_MAX_REPORTED_ERRORS = 100
_FORBIDDEN = ("\t", "\n", "\r")


class RecordError(ValueError):
    """A single invalid record; carries the 1-based line number."""

    def __init__(self, line: int, kind: str, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.kind = kind


@dataclass(frozen=True)
class SentencePair:
    """One (source, target) record; the unit of every pipeline stage.

    ids are assigned by the reader, 0,1,2,..., and are unique and strictly
    increasing within one stream. target is None for monolingual streams.
    """

    id: int
    lang: str
    source: str
    target: str | None = None


@dataclass(frozen=True)
class Paragraph:
    lang: str
    text: str

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError("paragraph text is empty after trimming")


@dataclass
class ReadReport:
    """Skip-with-report tally; serializes to the side-channel JSON object."""

    read: int = 0
    skipped: int = 0
    errors: list[dict] = field(default_factory=list)

    def record_error(self, err: RecordError) -> None:
        self.skipped += 1
        if len(self.errors) < _MAX_REPORTED_ERRORS:
            self.errors.append({"line": err.line, "kind": err.kind})

    def to_dict(self) -> dict:
        return {"read": self.read, "skipped": self.skipped, "errors": self.errors}


def read_pairs(
    stream: BinaryIO,
    format: str = "tsv",
    *,
    fail_fast: bool = False,
    report: ReadReport | None = None,
) -> Iterator[SentencePair]:
    """Lazily parse a TSV byte stream into SentencePairs.

    Invalid records are skipped and tallied in `report` (the default), or
    raised as RecordError when fail_fast is set. Memory use is bounded by
    the largest single line, not the corpus size.
    """
    if format != "tsv":
        raise ValueError(f"unsupported corpus format: {format!r}")
    if report is None:
        report = ReadReport()
    next_id = 0
    byte_offset = 0
    for line_no, raw in enumerate(stream, start=1):
        line_start = byte_offset
        byte_offset += len(raw)
        raw = raw.rstrip(b"\n")
        try:
            try:
                line = raw.decode("utf-8")
            except UnicodeDecodeError as exc:
                raise RecordError(
                    line_no,
                    f"malformed_utf8:byte={line_start + exc.start}",
                    f"malformed UTF-8 at byte {line_start + exc.start}",
                ) from None
            fields = line.split("\t")
            if len(fields) not in (2, 3):
                raise RecordError(
                    line_no, "wrong_field_count",
                    f"wrong field count at line {line_no} (got {len(fields)})",
                )
            for value in fields:
                if "\r" in value:
                    raise RecordError(line_no, "embedded_break", "field contains carriage return")
            lang, source = fields[0], fields[1]
            target = fields[2] if len(fields) == 3 else None
        except RecordError as err:
            if fail_fast:
                raise
            report.record_error(err)
            continue
        report.read += 1
        yield SentencePair(id=next_id, lang=lang, source=source, target=target)
        next_id += 1


def write_pairs(pairs: Iterable[SentencePair], stream: BinaryIO) -> int:
    """Serialize pairs to the exact TSV grammar read_pairs accepts.

    Round trip: read_pairs(write_pairs(x)) reproduces x field-for-field
    with ids reassigned sequentially. Raises ValueError naming the id of
    any record with an embedded tab or line break.
    """
    count = 0
    for pair in pairs:
        for what, value in (("lang", pair.lang), ("source", pair.source), ("target", pair.target)):
            if value is None:
                continue
            for ch in _FORBIDDEN:
                if ch in value:
                    raise ValueError(f"record {pair.id}: {what} contains {ch!r}")
        if pair.target is None:
            line = f"{pair.lang}\t{pair.source}\n"
        else:
            line = f"{pair.lang}\t{pair.source}\t{pair.target}\n"
        stream.write(line.encode("utf-8"))
        count += 1
    return count


# Sentence splitting. Deliberately rule-based and language-agnostic: split
# after a terminal when it is followed by whitespace and an uppercase or
# non-Latin letter, unless the preceding token is a known abbreviation or a
# single-letter initial.

_TERMINALS = frozenset({".", "!", "?", "。", "！", "？"})

DEFAULT_ABBREVIATIONS = frozenset({
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "no", "vs", "etc",
    "e.g", "i.e", "cf", "ca", "al", "fig", "approx", "dept", "inc", "ltd",
})


def _is_latin(ch: str) -> bool:
    return "LATIN" in unicodedata.name(ch, "")


def _starts_sentence(ch: str) -> bool:
    return ch.isupper() or (ch.isalpha() and not _is_latin(ch))


def _preceding_token(text: str, dot: int) -> str:
    start = dot
    while start > 0 and not text[start - 1].isspace():
        start -= 1
    return text[start:dot]


def split_paragraph(
    p: Paragraph,
    abbreviations: Iterable[str] = DEFAULT_ABBREVIATIONS,
) -> list[str]:
    """Split a paragraph into sentences; worst case the whole paragraph
    comes back as one sentence. No non-whitespace character is dropped."""
    stop = {a.lower().rstrip(".") for a in abbreviations}
    text = p.text
    n = len(text)
    sentences: list[str] = []
    start = 0
    i = 0
    while i < n:
        ch = text[i]
        if ch in _TERMINALS:
            j = i + 1
            if j < n and text[j].isspace():
                k = j
                while k < n and text[k].isspace():
                    k += 1
                if k < n and _starts_sentence(text[k]) and not _suppressed(text, i, stop):
                    piece = text[start:i + 1].strip()
                    if piece:
                        sentences.append(piece)
                    start = k
                    i = k
                    continue
        i += 1
    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


def _suppressed(text: str, terminal: int, stop: set[str]) -> bool:
    if text[terminal] != ".":
        return False
    word = _preceding_token(text, terminal)
    if not word:
        return False
    if len(word) == 1 and word.isalpha():
        return True  # single-letter initial, "A. Smith"
    return word.lower().rstrip(".") in stop
