"""Single executable exposing every pipeline stage as a subcommand.

All subcommands stream records over stdin/stdout by default and are
pipe-composable; `filter` is the one stage that must materialize its
input (ranking needs every score). Exit codes: 0 full success, 2 partial
success (some records rejected), 1 fatal error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from contextlib import ExitStack
from datetime import datetime, timezone
from typing import BinaryIO

from . import __version__
from .alignment import StatsAccumulator
from .cleaning import (
    FILTER_PRESETS,
    FilterConfig,
    RewriterEndpoint,
    ScorerEndpoint,
    char_lm_scorer,
    filter_by_score,
    neg_wer,
    relabel,
    score_pairs,
)
from .corpus_io import (
    Paragraph,
    ReadReport,
    SentencePair,
    read_pairs,
    split_paragraph,
    write_pairs,
)
from .corruption import (
    DEFAULT_MAX_SENTENCE_BYTES,
    CorruptionConfig,
    SentenceTooLong,
    corrupt_sentence,
)
from .evaluation import ANNOTATOR_POLICIES, evaluate_corpus, parse_m2, retokenize

AUTH_ENV = "GEC_FORGE_AUTH"
_PROGRESS_EVERY = 10_000


class _Parser(argparse.ArgumentParser):
    # Usage errors exit 1 with a one-line diagnostic; argparse defaults
    # to exit 2, which this tool reserves for partial success.
    def error(self, message):
        self.exit(1, f"{self.prog}: error: {message}\n")


class _Fatal(Exception):
    pass


def _open_input(stack: ExitStack, path: str) -> BinaryIO:
    if path == "-":
        return sys.stdin.buffer
    try:
        return stack.enter_context(open(path, "rb"))
    except OSError as exc:
        raise _Fatal(f"cannot read {path}: {exc.strerror}") from None


def _open_output(stack: ExitStack, path: str) -> BinaryIO:
    if path == "-":
        return sys.stdout.buffer
    try:
        return stack.enter_context(open(path, "wb"))
    except OSError as exc:
        raise _Fatal(f"cannot write {path}: {exc.strerror}") from None


class _RejectSink:
    """Rejected records: corpus TSV plus a reason column. Without a path
    they still land on the error stream, never dropped silently."""

    def __init__(self, path: str | None):
        self.count = 0
        self._file = open(path, "w", encoding="utf-8") if path else None

    def add(self, pair: SentencePair, reason: str) -> None:
        self.count += 1
        reason = reason.replace("\t", " ").replace("\n", " ").replace("\r", " ")
        line = f"{pair.lang}\t{pair.source}\t{pair.target or ''}\t{reason}"
        if self._file is not None:
            self._file.write(line + "\n")
        else:
            print(f"reject: {line}", file=sys.stderr)

    def close(self) -> None:
        if self._file is not None:
            self._file.close()


class _Progress:
    def __init__(self, label: str):
        self.label = label
        self.n = 0

    def tick(self) -> None:
        self.n += 1
        if self.n % _PROGRESS_EVERY == 0:
            print(f"{self.label}: {self.n} records", file=sys.stderr)


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _emit_json(args, payload: dict, path_attr: str) -> None:
    path = getattr(args, path_attr, None)
    text = json.dumps(payload, sort_keys=True)
    if path:
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(text + "\n")
    else:
        print(text, file=sys.stderr)


def _emit_manifest(args, config: dict, counts: dict, started: str) -> None:
    if args.no_manifest:
        return
    manifest = {
        "subcommand": args.command,
        "config": config,
        "input": getattr(args, "input", None),
        "output": getattr(args, "output", None),
        "seed": getattr(args, "seed", None),
        "started_at": started,
        "finished_at": _utc_now(),
        "counts": counts,
        "version": __version__,
    }
    _emit_json(args, manifest, "manifest")


def _exit_code(rejected: int) -> int:
    return 2 if rejected else 0


def _auth_token() -> str | None:
    return os.environ.get(AUTH_ENV) or None


# Subcommands.

def cmd_split(args) -> int:
    started = _utc_now()
    report = ReadReport()
    rejects = _RejectSink(args.rejects)
    progress = _Progress("split")
    written = 0
    with ExitStack() as stack:
        source = _open_input(stack, args.input)
        sink = _open_output(stack, args.output)
        abbreviations = _load_abbreviations(args.abbrev_file)
        out_id = 0
        for pair in read_pairs(source, fail_fast=args.fail_fast, report=report):
            progress.tick()
            try:
                paragraph = Paragraph(lang=pair.lang, text=pair.source)
            except ValueError as exc:
                rejects.add(pair, str(exc))
                continue
            for sentence in split_paragraph(paragraph, abbreviations):
                written += write_pairs(
                    [SentencePair(id=out_id, lang=pair.lang, source=sentence)], sink)
                out_id += 1
    rejects.close()
    _emit_json(args, report.to_dict(), "report")
    counts = {"read": report.read, "written": written, "rejected": rejects.count + report.skipped}
    _emit_manifest(args, {"abbrev_file": args.abbrev_file, "fail_fast": args.fail_fast},
                   counts, started)
    return _exit_code(counts["rejected"])


def _load_abbreviations(path: str | None):
    from .corpus_io import DEFAULT_ABBREVIATIONS
    if path is None:
        return DEFAULT_ABBREVIATIONS
    try:
        with open(path, encoding="utf-8") as handle:
            return frozenset(line.strip() for line in handle if line.strip())
    except OSError as exc:
        raise _Fatal(f"cannot read {path}: {exc.strerror}") from None


def _load_corruption_config(args) -> CorruptionConfig:
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as handle:
                config = CorruptionConfig.from_json(handle.read())
        except OSError as exc:
            raise _Fatal(f"cannot read {args.config}: {exc.strerror}") from None
        except (ValueError, TypeError) as exc:
            raise _Fatal(f"invalid config: {exc}") from None
    else:
        config = CorruptionConfig()
    config = dataclasses.replace(config, seed=args.seed)
    try:
        config.validate()
    except ValueError as exc:
        raise _Fatal(f"invalid config: {exc}") from None
    return config


def cmd_corrupt(args) -> int:
    started = _utc_now()
    config = _load_corruption_config(args)
    report = ReadReport()
    rejects = _RejectSink(args.rejects)
    progress = _Progress("corrupt")
    written = 0
    with ExitStack() as stack:
        source = _open_input(stack, args.input)
        sink = _open_output(stack, args.output)
        plans_file = (
            stack.enter_context(open(args.plans, "w", encoding="utf-8"))
            if args.plans else None
        )
        for pair in read_pairs(source, fail_fast=args.fail_fast, report=report):
            progress.tick()
            index = pair.id + args.start_id
            try:
                corrupted, plan = corrupt_sentence(
                    pair.source, None, config, index,
                    lang=pair.lang, max_bytes=args.max_bytes)
            except (SentenceTooLong, ValueError) as exc:
                rejects.add(pair, str(exc))
                continue
            written += write_pairs([corrupted], sink)
            if plans_file is not None:
                plans_file.write(json.dumps(plan.to_dict(), sort_keys=True) + "\n")
    rejects.close()
    _emit_json(args, report.to_dict(), "report")
    counts = {"read": report.read, "written": written, "rejected": rejects.count + report.skipped}
    _emit_manifest(args, config.to_dict(), counts, started)
    return _exit_code(counts["rejected"])


def cmd_stats(args) -> int:
    started = _utc_now()
    report = ReadReport()
    rejects = _RejectSink(args.rejects)
    progress = _Progress("stats")
    acc = StatsAccumulator()
    with ExitStack() as stack:
        source = _open_input(stack, args.input)
        sink = _open_output(stack, args.output)
        for pair in read_pairs(source, fail_fast=args.fail_fast, report=report):
            progress.tick()
            if pair.target is None:
                rejects.add(pair, "statistics require a target")
                continue
            acc.add(pair)
        stats = acc.finalize()
        if args.json:
            sink.write((json.dumps(stats.to_dict(), sort_keys=True) + "\n").encode("utf-8"))
        else:
            sink.write(_stats_table(stats).encode("utf-8"))
    rejects.close()
    _emit_json(args, report.to_dict(), "report")
    counts = {"read": report.read, "written": acc.n_pairs,
              "rejected": rejects.count + report.skipped}
    _emit_manifest(args, {"json": args.json}, counts, started)
    return _exit_code(counts["rejected"])


def _stats_table(stats) -> str:
    # Column order follows the usual corpus-statistics table: LR, WER, Sub, Del, Ins.
    def fmt(value) -> str:
        return "-" if value is None else f"{value:.2f}"

    headers = ["pairs", "LR", "WER", "Sub", "Del", "Ins"]
    values = [str(stats.n_pairs), fmt(stats.lr), fmt(stats.wer),
              fmt(stats.sub), fmt(stats.del_), fmt(stats.ins)]
    widths = [max(len(h), len(v)) for h, v in zip(headers, values)]
    head = "  ".join(h.rjust(w) for h, w in zip(headers, widths))
    row = "  ".join(v.rjust(w) for v, w in zip(values, widths))
    return head + "\n" + row + "\n"


def cmd_relabel(args) -> int:
    started = _utc_now()
    endpoint = RewriterEndpoint(
        base_url=args.endpoint,
        batch_size=args.batch_size,
        timeout=args.timeout,
        max_retries=args.retries,
        auth_token=_auth_token(),
    )
    report = ReadReport()
    rejects = _RejectSink(args.rejects)
    progress = _Progress("relabel")
    written = 0
    with ExitStack() as stack:
        source = _open_input(stack, args.input)
        sink = _open_output(stack, args.output)
        pairs = read_pairs(source, fail_fast=args.fail_fast, report=report)
        for pair in relabel(pairs, endpoint, on_reject=rejects.add, in_flight=args.threads):
            progress.tick()
            try:
                written += write_pairs([pair], sink)
            except ValueError as exc:
                # untrusted rewriter output (embedded tab or line break)
                rejects.add(dataclasses.replace(pair, target=""), str(exc))
    rejects.close()
    _emit_json(args, report.to_dict(), "report")
    counts = {"read": report.read, "written": written, "rejected": rejects.count + report.skipped}
    _emit_manifest(
        args,
        {"endpoint": args.endpoint, "batch_size": args.batch_size,
         "timeout": args.timeout, "retries": args.retries, "threads": args.threads},
        counts, started)
    return _exit_code(counts["rejected"])


def _make_scorer(args, pairs: list[SentencePair]):
    if args.endpoint:
        return ScorerEndpoint(
            base_url=args.endpoint,
            batch_size=args.batch_size,
            timeout=args.timeout,
            max_retries=args.retries,
            auth_token=_auth_token(),
        )
    if args.scorer == "builtin:neg_wer":
        return neg_wer
    if args.scorer == "builtin:char_lm":
        return char_lm_scorer(pairs)
    raise _Fatal(f"unknown scorer {args.scorer!r}")


def cmd_filter(args) -> int:
    started = _utc_now()
    if args.preset:
        config = FILTER_PRESETS[args.preset]
    else:
        try:
            config = FilterConfig(keep_fraction=args.keep)
        except ValueError as exc:
            raise _Fatal(str(exc)) from None
    report = ReadReport()
    rejects = _RejectSink(args.rejects)
    progress = _Progress("filter")
    with ExitStack() as stack:
        source = _open_input(stack, args.input)
        sink = _open_output(stack, args.output)
        # Ranking requires every score, so this stage is O(N) in memory by
        # contract; everything else in the pipeline streams.
        pairs = []
        for pair in read_pairs(source, fail_fast=args.fail_fast, report=report):
            progress.tick()
            if pair.target is None:
                rejects.add(pair, "filtering requires a target")
                continue
            pairs.append(pair)
        scorer = _make_scorer(args, pairs)
        scored = list(score_pairs(
            pairs, scorer, on_reject=rejects.add, in_flight=args.threads))
        kept = filter_by_score(scored, config)
        written = write_pairs(kept, sink)
    rejects.close()
    _emit_json(args, report.to_dict(), "report")
    counts = {"read": report.read, "written": written, "rejected": rejects.count + report.skipped}
    _emit_manifest(
        args,
        {"keep_fraction": config.keep_fraction,
         "scorer": args.scorer if not args.endpoint else args.endpoint,
         "threads": args.threads},
        counts, started)
    return _exit_code(counts["rejected"])


def cmd_evaluate(args) -> int:
    started = _utc_now()
    try:
        with open(args.gold, encoding="utf-8") as handle:
            annotations = list(parse_m2(handle))
    except OSError as exc:
        raise _Fatal(f"cannot read {args.gold}: {exc.strerror}") from None
    except ValueError as exc:
        raise _Fatal(f"invalid gold file: {exc}") from None
    try:
        with open(args.hyp, encoding="utf-8") as handle:
            hyp_lines = [line.rstrip("\n") for line in handle]
    except OSError as exc:
        raise _Fatal(f"cannot read {args.hyp}: {exc.strerror}") from None
    while hyp_lines and hyp_lines[-1] == "":
        hyp_lines.pop()
    if len(hyp_lines) != len(annotations):
        raise _Fatal(
            f"hypothesis count {len(hyp_lines)} does not match "
            f"{len(annotations)} gold sentences")

    triples = []
    for gold, line in zip(annotations, hyp_lines):
        tokens = retokenize(line) if args.retokenize else line.split()
        triples.append((gold.source_tokens, tokens, gold))
    eval_report = evaluate_corpus(
        triples, annotator_policy=args.annotator_policy, max_merge=args.max_merge)

    with ExitStack() as stack:
        sink = _open_output(stack, args.output)
        if args.json:
            sink.write((json.dumps(eval_report.to_dict(), sort_keys=True) + "\n").encode("utf-8"))
        else:
            sink.write(
                (f"Precision : {eval_report.precision:.4f}\n"
                 f"Recall : {eval_report.recall:.4f}\n"
                 f"F_{eval_report.beta} : {eval_report.f_beta:.4f}\n").encode("utf-8"))
    counts = {"read": len(annotations), "written": 1, "rejected": 0}
    _emit_manifest(
        args,
        {"gold": args.gold, "hyp": args.hyp, "retokenize": args.retokenize,
         "annotator_policy": args.annotator_policy, "max_merge": args.max_merge},
        counts, started)
    return 0


def cmd_retokenize(args) -> int:
    started = _utc_now()
    progress = _Progress("retokenize")
    written = 0
    with ExitStack() as stack:
        source = _open_input(stack, args.input)
        sink = _open_output(stack, args.output)
        for raw in source:
            progress.tick()
            line = raw.rstrip(b"\n").decode("utf-8")
            sink.write((" ".join(retokenize(line)) + "\n").encode("utf-8"))
            written += 1
    counts = {"read": written, "written": written, "rejected": 0}
    _emit_manifest(args, {}, counts, started)
    return 0


def _add_io_flags(sub, with_rejects: bool = True) -> None:
    sub.add_argument("--input", default="-", help="input path or - for stdin")
    sub.add_argument("--output", default="-", help="output path or - for stdout")
    sub.add_argument("--manifest", default=None, help="write the run manifest JSON here")
    sub.add_argument("--no-manifest", action="store_true", help="suppress the run manifest")
    sub.add_argument("--report", default=None, help="write the read-report JSON here")
    sub.add_argument("--fail-fast", action="store_true",
                     help="abort on the first malformed record instead of skipping")
    if with_rejects:
        sub.add_argument("--rejects", default=None,
                         help="write rejected records (TSV + reason column) here")


def _add_endpoint_flags(sub) -> None:
    sub.add_argument("--batch-size", type=int, default=32)
    sub.add_argument("--timeout", type=float, default=60.0)
    sub.add_argument("--retries", type=int, default=3)
    sub.add_argument("--threads", type=int, default=4,
                     help="maximum in-flight request batches")


def build_parser() -> _Parser:
    parser = _Parser(prog="gecforge", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub = commands.add_parser("split",
                              help="split paragraphs into sentences")
    _add_io_flags(sub)
    sub.add_argument("--abbrev-file", default=None,
                     help="file with one non-breaking abbreviation per line")
    sub.set_defaults(func=cmd_split)

    sub = commands.add_parser("corrupt",
                              help="corrupt clean sentences into (corrupted, original) pairs")
    _add_io_flags(sub)
    sub.add_argument("--seed", type=int, required=True, help="corruption seed")
    sub.add_argument("--config", default=None, help="corruption config JSON file")
    sub.add_argument("--plans", default=None, help="write corruption plans (JSONL) here")
    sub.add_argument("--start-id", type=int, default=0,
                     help="record index of the first input record (for sharded runs)")
    sub.add_argument("--max-bytes", type=int, default=DEFAULT_MAX_SENTENCE_BYTES,
                     help="skip sentences longer than this many UTF-8 bytes")
    sub.set_defaults(func=cmd_corrupt)

    sub = commands.add_parser("stats",
                              help="corpus length ratio and WER decomposition")
    _add_io_flags(sub)
    sub.add_argument("--json", action="store_true", help="emit a JSON object instead of a table")
    sub.set_defaults(func=cmd_stats)

    sub = commands.add_parser("relabel",
                              help="replace targets via a rewriter endpoint")
    _add_io_flags(sub)
    sub.add_argument("--endpoint", required=True, help="rewriter base URL")
    _add_endpoint_flags(sub)
    sub.set_defaults(func=cmd_relabel)

    sub = commands.add_parser("filter",
                              help="score originals and keep the best fraction")
    _add_io_flags(sub)
    sub.add_argument("--scorer", default="builtin:neg_wer",
                     help="builtin:neg_wer or builtin:char_lm")
    sub.add_argument("--endpoint", default=None, help="scorer base URL (overrides --scorer)")
    sub.add_argument("--keep", type=float, default=0.5, help="fraction of records to keep")
    sub.add_argument("--preset", choices=sorted(FILTER_PRESETS), default=None,
                     help="named keep fraction (overrides --keep)")
    _add_endpoint_flags(sub)
    sub.set_defaults(func=cmd_filter)

    sub = commands.add_parser("evaluate",
                              help="MaxMatch F_0.5 against an M2 gold file")
    sub.add_argument("--input", default="-", help=argparse.SUPPRESS)
    sub.add_argument("--output", default="-", help="output path or - for stdout")
    sub.add_argument("--manifest", default=None)
    sub.add_argument("--no-manifest", action="store_true")
    sub.add_argument("--gold", required=True, help="gold M2 file")
    sub.add_argument("--hyp", required=True, help="hypothesis text file, one line per sentence")
    sub.add_argument("--retokenize", action="store_true",
                     help="retokenize hypothesis lines before scoring")
    sub.add_argument("--json", action="store_true", help="emit the full JSON report")
    sub.add_argument("--annotator-policy", choices=ANNOTATOR_POLICIES,
                     default="greedy-cumulative")
    sub.add_argument("--max-merge", type=int, default=None,
                     help="cap on merged edit span (tokens); default unlimited")
    sub.set_defaults(func=cmd_evaluate)

    sub = commands.add_parser("retokenize",
                              help="retokenize plain text lines to reference-style tokens")
    sub.add_argument("--input", default="-")
    sub.add_argument("--output", default="-")
    sub.add_argument("--manifest", default=None)
    sub.add_argument("--no-manifest", action="store_true")
    sub.set_defaults(func=cmd_retokenize)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _Fatal as exc:
        print(f"gecforge: error: {exc}", file=sys.stderr)
        return 1
    except BrokenPipeError:
        return 1
    except KeyboardInterrupt:
        return 1


if __name__ == "__main__":
    sys.exit(main())
