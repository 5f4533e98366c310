"""Scoring and corpus tools for word-level event-speech recognition transcripts."""

from __future__ import annotations

__version__ = "0.1.0"

from .align import AlignmentResult, EditOp, diff_opcodes, event_preserving_align
from .corpus import ManifestEntry, compute_stats, load_hypotheses, load_manifest, normalize_external
from .perturb import PerturbSpec, perturb, perturb_tags, perturb_words
from .score import ScoreReport, positions_of, score_corpus, score_utterance, wer
from .taxonomy import TAGS, Category, EventKind, EventTag, lookup, map_external
from .transcript import AnnotatedTranscript, DiscreteEvent, Span, parse, parse_lenient, serialize, strip_tags

__all__ = [
    "AlignmentResult", "AnnotatedTranscript", "Category", "DiscreteEvent", "EditOp", "EventKind",
    "EventTag", "ManifestEntry", "PerturbSpec", "ScoreReport", "Span", "TAGS", "compute_stats",
    "diff_opcodes", "event_preserving_align", "load_hypotheses", "load_manifest", "lookup",
    "map_external", "normalize_external", "parse", "parse_lenient", "perturb", "perturb_tags",
    "perturb_words", "positions_of", "score_corpus", "score_utterance", "serialize", "strip_tags", "wer",
]
