"""gecforge: streaming corpus toolkit for GEC data engineering.

Generates language-agnostic synthetic training pairs by sentence
corruption, cleans noisy parallel corpora by relabeling or score
filtering, computes corpus quality statistics (length ratio, WER split
into substitutions/deletions/insertions), and scores system output with
a MaxMatch F_0.5 evaluator.
"""

__version__ = "0.1.0"

from .alignment import CorpusStats, EditScript, aggregate, align_tokens, pair_counts
from .cleaning import (
    CharNgramScorer,
    FilterConfig,
    RewriterEndpoint,
    ScoredPair,
    ScorerEndpoint,
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
    CorruptionConfig,
    CorruptionPlan,
    PlanStep,
    alphabet_of,
    apply_plan,
    corrupt_sentence,
)
from .evaluation import (
    EvalReport,
    GoldAnnotation,
    GoldEdit,
    SystemEdit,
    classify_edit,
    evaluate_corpus,
    extract_system_edits,
    max_match_sentence,
    parse_m2,
    retokenize,
    write_m2,
)

__all__ = [
    "__version__",
    "CorpusStats", "EditScript", "aggregate", "align_tokens", "pair_counts",
    "CharNgramScorer", "FilterConfig", "RewriterEndpoint", "ScoredPair",
    "ScorerEndpoint", "filter_by_score", "neg_wer", "relabel", "score_pairs",
    "Paragraph", "ReadReport", "SentencePair", "read_pairs", "split_paragraph",
    "write_pairs",
    "CorruptionConfig", "CorruptionPlan", "PlanStep", "alphabet_of",
    "apply_plan", "corrupt_sentence",
    "EvalReport", "GoldAnnotation", "GoldEdit", "SystemEdit", "classify_edit",
    "evaluate_corpus", "extract_system_edits", "max_match_sentence",
    "parse_m2", "retokenize", "write_m2",
]
