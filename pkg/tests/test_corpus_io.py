import io
import random

import pytest

from gecforge.corpus_io import (
    DEFAULT_ABBREVIATIONS,
    Paragraph,
    ReadReport,
    RecordError,
    SentencePair,
    read_pairs,
    split_paragraph,
    write_pairs,
)


def read_all(data: bytes, **kwargs):
    return list(read_pairs(io.BytesIO(data), **kwargs))


def test_read_basic_line():
    pairs = read_all(b"en\tI has a apple .\tI have an apple .\n")
    assert pairs == [
        SentencePair(id=0, lang="en", source="I has a apple .", target="I have an apple .")
    ]


def test_read_two_field_line_has_no_target():
    pairs = read_all(b"de\tHallo Welt\n")
    assert pairs == [SentencePair(id=0, lang="de", source="Hallo Welt")]


def test_read_empty_stream():
    assert read_all(b"") == []


def test_wrong_field_count_reports_line_number():
    report = ReadReport()
    pairs = read_all(b"en\ta\tb\nen\ta\tb\tc\td\nen\tx\ty\n", report=report)
    assert [p.source for p in pairs] == ["a", "x"]
    assert [p.id for p in pairs] == [0, 1]
    assert report.read == 2 and report.skipped == 1
    assert report.errors == [{"line": 2, "kind": "wrong_field_count"}]


def test_wrong_field_count_fail_fast():
    with pytest.raises(RecordError, match="wrong field count at line 1"):
        read_all(b"en\ta\tb\tc\td\n", fail_fast=True)


def test_malformed_utf8_reports_byte_offset():
    data = b"en\tok\tfine\nen\tbad\xff\tx\n"
    report = ReadReport()
    pairs = read_all(data, report=report)
    assert len(pairs) == 1
    offset = data.index(b"\xff")
    assert report.errors == [{"line": 2, "kind": f"malformed_utf8:byte={offset}"}]
    with pytest.raises(RecordError, match=f"byte {offset}"):
        read_all(data, fail_fast=True)


def test_carriage_return_is_rejected_not_repaired():
    report = ReadReport()
    pairs = read_all(b"en\ta\rb\tc\n", report=report)
    assert pairs == []
    assert report.errors[0]["kind"] == "embedded_break"


def test_empty_line_is_a_record_error():
    report = ReadReport()
    read_all(b"en\ta\tb\n\nen\tc\td\n", report=report)
    assert report.skipped == 1
    assert report.errors[0]["line"] == 2


def test_error_list_caps_at_100():
    report = ReadReport()
    read_all(b"bad\n" * 250, report=report)
    assert report.skipped == 250
    assert len(report.errors) == 100


def test_write_single_pair_exact_bytes():
    sink = io.BytesIO()
    n = write_pairs([SentencePair(0, "en", "a dog .", "A dog .")], sink)
    assert n == 1
    assert sink.getvalue() == b"en\ta dog .\tA dog .\n"


def test_write_rejects_tab_naming_the_id():
    sink = io.BytesIO()
    with pytest.raises(ValueError, match="record 7.*source"):
        write_pairs([SentencePair(7, "en", "a\tb", "c")], sink)


def test_write_rejects_newline_in_target():
    with pytest.raises(ValueError, match="record 3.*target"):
        write_pairs([SentencePair(3, "en", "ok", "bad\nline")], io.BytesIO())


def make_fixture_pairs(n=1000):
    rng = random.Random(4242)
    words = ["alpha", "beta", "gamma", "delta", "räksmörgås", "собака", "犬", "."]
    pairs = []
    for i in range(n):
        src = " ".join(rng.choice(words) for _ in range(rng.randint(1, 8)))
        tgt = " ".join(rng.choice(words) for _ in range(rng.randint(1, 8)))
        lang = rng.choice(["en", "de", "ru", "cs"])
        pairs.append(SentencePair(id=i, lang=lang, source=src, target=tgt))
    return pairs


def test_round_trip_1000_pairs_byte_identical():
    pairs = make_fixture_pairs()
    first = io.BytesIO()
    write_pairs(pairs, first)
    reread = read_all(first.getvalue())
    assert [(p.lang, p.source, p.target) for p in reread] == [
        (p.lang, p.source, p.target) for p in pairs
    ]
    assert [p.id for p in reread] == list(range(len(pairs)))
    second = io.BytesIO()
    write_pairs(reread, second)
    assert second.getvalue() == first.getvalue()


def test_read_is_lazy():
    class CountingStream(io.BytesIO):
        def __init__(self, data):
            super().__init__(data)
            self.lines_served = 0

        def readline(self, *args):
            self.lines_served += 1
            return super().readline(*args)

    stream = CountingStream(b"en\ta\tb\n" * 10_000)
    it = read_pairs(stream)
    next(it)
    assert stream.lines_served < 100


def test_paragraph_requires_content():
    with pytest.raises(ValueError, match="empty"):
        Paragraph(lang="en", text="   \n ")


def test_split_two_sentences():
    p = Paragraph(lang="en", text="Hello there. How are you?")
    assert split_paragraph(p) == ["Hello there.", "How are you?"]


def test_split_does_not_break_on_lowercase_continuation():
    p = Paragraph(lang="en", text="He said approx. nothing more")
    assert split_paragraph(p) == ["He said approx. nothing more"]


def test_split_abbreviation_suppresses_split():
    assert "approx" in DEFAULT_ABBREVIATIONS
    p = Paragraph(lang="en", text="He said approx. Nothing happened.")
    assert split_paragraph(p) == ["He said approx. Nothing happened."]
    # Without the stop-list entry the same text splits.
    assert split_paragraph(p, abbreviations=()) == [
        "He said approx.", "Nothing happened."
    ]


def test_split_single_letter_initial_never_splits():
    p = Paragraph(lang="en", text="Written by A. Smith. The end.")
    assert split_paragraph(p) == ["Written by A. Smith.", "The end."]


def test_split_cyrillic_uses_uppercase():
    p = Paragraph(lang="ru", text="Привет мир. Как дела?")
    assert split_paragraph(p) == ["Привет мир.", "Как дела?"]


def test_split_cjk_terminal_with_space():
    p = Paragraph(lang="ja", text="こんにちは。 元気ですか。")
    assert split_paragraph(p) == ["こんにちは。", "元気ですか。"]


def test_split_preserves_non_space_characters():
    rng = random.Random(7)
    chars = "abcDEF .!?。 хЖ"
    for _ in range(200):
        text = "".join(rng.choice(chars) for _ in range(rng.randint(1, 80)))
        if not text.strip():
            continue
        p = Paragraph(lang="x", text=text)
        pieces = split_paragraph(p)
        assert all(piece.strip() for piece in pieces)

        def multiset(s):
            out = {}
            for ch in s:
                if not ch.isspace():
                    out[ch] = out.get(ch, 0) + 1
            return out

        assert multiset("".join(pieces)) == multiset(text)


def test_split_joined_output_recovers_text_modulo_whitespace():
    text = "One two.  Three four!   Five?"
    p = Paragraph(lang="en", text=text)
    joined = " ".join(split_paragraph(p))
    assert " ".join(joined.split()) == " ".join(text.split())
