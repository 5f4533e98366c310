"""Position-aware event scoring and tag-stripped WER.

For a transcript of N words there are 2N+1 positions: even index ``2k`` is
gap ``k`` and odd index ``2i+1`` is word ``i``.  Discrete events label gaps,
continuous events label every word of their span.  Precision, recall and F1
are computed per tag over these (position, tag) labels after the hypothesis
has been aligned onto the reference words.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, NamedTuple, Sequence

from .align import AlignmentResult, event_preserving_align
from .taxonomy import TAGS, Category, EventKind, EventTag
from .transcript import AnnotatedTranscript, strip_tags, tokenize


class NoReferenceEvents(ValueError):
    pass


class PositionLabel(NamedTuple):
    position: int
    tag: EventTag | Category

    @property
    def name(self) -> str:
        return self.tag.name if isinstance(self.tag, EventTag) else self.tag.value


def positions_of(t: AnnotatedTranscript) -> frozenset[PositionLabel]:
    labels = {PositionLabel(2 * e.gap, e.tag) for e in t.discrete}
    for s in t.spans:
        labels.update(PositionLabel(2 * i + 1, s.tag) for i in range(s.start, s.end + 1))
    return frozenset(labels)


def relabel_categories(labels: Iterable[PositionLabel]) -> frozenset[PositionLabel]:
    return frozenset(PositionLabel(p.position, p.tag.category) for p in labels)


# --- counts -------------------------------------------------------------------


@dataclass(frozen=True)
class TagCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __add__(self, other: TagCounts) -> TagCounts:
        return TagCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    def __bool__(self) -> bool:
        return bool(self.tp or self.fp or self.fn)

    @property
    def has_reference(self) -> bool:
        return self.tp + self.fn > 0


@dataclass(frozen=True)
class ConfusionCounts:
    """Per-label TP/FP/FN; labels are tag names or category names."""

    by_label: Mapping[str, TagCounts] = field(default_factory=dict)

    def __add__(self, other: ConfusionCounts) -> ConfusionCounts:
        merged = dict(self.by_label)
        for k, v in other.by_label.items():
            merged[k] = merged.get(k, TagCounts()) + v
        return ConfusionCounts(merged)

    def __getitem__(self, label: str) -> TagCounts:
        return self.by_label.get(label, TagCounts())

    def labels(self) -> list[str]:
        return [k for k, v in self.by_label.items() if v]

    def total(self) -> TagCounts:
        return sum(self.by_label.values(), TagCounts())

    def restrict(self, labels: Iterable[str]) -> ConfusionCounts:
        keep = set(labels)
        return ConfusionCounts({k: v for k, v in self.by_label.items() if k in keep})


def count(ref_positions: Iterable[PositionLabel], hyp_positions: Iterable[PositionLabel]) -> ConfusionCounts:
    ref, hyp = set(ref_positions), set(hyp_positions)
    acc: dict[str, list[int]] = {}
    for p in ref & hyp:
        acc.setdefault(p.name, [0, 0, 0])[0] += 1
    for p in hyp - ref:
        acc.setdefault(p.name, [0, 0, 0])[1] += 1
    for p in ref - hyp:
        acc.setdefault(p.name, [0, 0, 0])[2] += 1
    return ConfusionCounts({k: TagCounts(*v) for k, v in acc.items()})


def merge(counts: Iterable[ConfusionCounts]) -> ConfusionCounts:
    out = ConfusionCounts()
    for c in counts:
        out = out + c
    return out


# --- P / R / F1 ---------------------------------------------------------------


@dataclass(frozen=True)
class PRF:
    precision: Fraction
    recall: Fraction
    f1: Fraction

    @classmethod
    def from_counts(cls, c: TagCounts) -> PRF:
        p = Fraction(c.tp, c.tp + c.fp) if c.tp + c.fp else Fraction(0)
        r = Fraction(c.tp, c.tp + c.fn) if c.tp + c.fn else Fraction(0)
        f1 = 2 * p * r / (p + r) if p + r else Fraction(0)
        return cls(p, r, f1)

    def as_floats(self) -> tuple[float, float, float]:
        return float(self.precision), float(self.recall), float(self.f1)


def _require_reference(counts: ConfusionCounts) -> None:
    if not any(c.has_reference for c in counts.by_label.values()):
        raise NoReferenceEvents("no reference events to score")


def micro(counts: ConfusionCounts) -> PRF:
    _require_reference(counts)
    return PRF.from_counts(counts.total())


def macro(counts: ConfusionCounts) -> PRF:
    """Unweighted mean of per-label P, R and F1 over labels with any count."""
    _require_reference(counts)
    prfs = [PRF.from_counts(c) for c in counts.by_label.values() if c]
    k = len(prfs)
    return PRF(
        sum((x.precision for x in prfs), Fraction(0)) / k,
        sum((x.recall for x in prfs), Fraction(0)) / k,
        sum((x.f1 for x in prfs), Fraction(0)) / k,
    )


def aggregate_report(category_counts: ConfusionCounts) -> dict[Category, tuple[TagCounts, PRF]]:
    """Per-category rows from counts computed on category-relabelled positions."""
    out = {}
    for cat in Category:
        c = category_counts[cat.value]
        if c:
            out[cat] = (c, PRF.from_counts(c))
    return out


def kind_split(counts: ConfusionCounts) -> dict[EventKind, PRF | None]:
    """Micro PRF over discrete tags only and continuous tags only (None if no reference events)."""
    out: dict[EventKind, PRF | None] = {}
    for kind in EventKind:
        sub = counts.restrict(t.name for t in TAGS if t.kind is kind)
        try:
            out[kind] = micro(sub)
        except NoReferenceEvents:
            out[kind] = None
    return out


# --- WER ----------------------------------------------------------------------


def edit_distance(a: Sequence[str], b: Sequence[str]) -> int:
    """Levenshtein distance with unit costs."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


def wer_tokens(text: str, language: str = "auto") -> list[str]:
    # character units for Chinese, whole-run units only when the text is declared English
    return tokenize(strip_tags(text), split_cjk=language != "en")


def wer_counts(ref_text: str, hyp_text: str, language: str = "auto") -> tuple[int, int]:
    """``(edit distance, reference token count)`` with event tags excluded."""
    ref = wer_tokens(ref_text, language)
    hyp = wer_tokens(hyp_text, language)
    return edit_distance(ref, hyp), len(ref)


def wer(ref_text: str, hyp_text: str, language: str = "auto") -> Fraction:
    dist, n = wer_counts(ref_text, hyp_text, language)
    return Fraction(dist, max(1, n))


# --- corpus scoring -----------------------------------------------------------


@dataclass(frozen=True)
class UtteranceScore:
    counts: ConfusionCounts
    category_counts: ConfusionCounts
    alignment: AlignmentResult


def score_utterance(ref: AnnotatedTranscript, hyp: AnnotatedTranscript) -> UtteranceScore:
    result = event_preserving_align(hyp, ref.words)
    ref_pos = positions_of(ref)
    hyp_pos = positions_of(result.aligned)
    return UtteranceScore(
        count(ref_pos, hyp_pos),
        count(relabel_categories(ref_pos), relabel_categories(hyp_pos)),
        result,
    )


_TAG_ORDER = {t.name: i for i, t in enumerate(TAGS)}


@dataclass(frozen=True)
class ScoreReport:
    counts: ConfusionCounts
    category_counts: ConfusionCounts
    utterances: int
    missing: tuple[str, ...] = ()
    extra: tuple[str, ...] = ()
    dropped_spans: int = 0
    diagnostics: tuple[tuple[str, str], ...] = ()

    def per_tag(self) -> dict[str, tuple[TagCounts, PRF]]:
        names = sorted(self.counts.labels(), key=lambda n: _TAG_ORDER.get(n, len(_TAG_ORDER)))
        return {n: (self.counts[n], PRF.from_counts(self.counts[n])) for n in names}

    @property
    def micro(self) -> PRF | None:
        try:
            return micro(self.counts)
        except NoReferenceEvents:
            return None

    @property
    def macro(self) -> PRF | None:
        try:
            return macro(self.counts)
        except NoReferenceEvents:
            return None

    def categories(self) -> dict[Category, tuple[TagCounts, PRF]]:
        return aggregate_report(self.category_counts)

    @property
    def category_micro(self) -> PRF | None:
        try:
            return micro(self.category_counts)
        except NoReferenceEvents:
            return None

    @property
    def category_macro(self) -> PRF | None:
        try:
            return macro(self.category_counts)
        except NoReferenceEvents:
            return None

    def kinds(self) -> dict[EventKind, PRF | None]:
        return kind_split(self.counts)

    def to_dict(self) -> dict:
        def prf(x: PRF | None) -> dict | None:
            if x is None:
                return None
            return {"p": _num(x.precision), "r": _num(x.recall), "f1": _num(x.f1)}

        def row(c: TagCounts, x: PRF) -> dict:
            return {"tp": c.tp, "fp": c.fp, "fn": c.fn, **prf(x)}

        kinds = {}
        for kind, x in self.kinds().items():
            sub = self.counts.restrict(t.name for t in TAGS if t.kind is kind).total()
            kinds[kind.value] = {"tp": sub.tp, "fp": sub.fp, "fn": sub.fn, "micro": prf(x)}
        return {
            "tags": {n: row(c, x) for n, (c, x) in self.per_tag().items()},
            "micro": prf(self.micro),
            "macro": prf(self.macro),
            "categories": {
                "tags": {cat.value: row(c, x) for cat, (c, x) in self.categories().items()},
                "micro": prf(self.category_micro),
                "macro": prf(self.category_macro),
            },
            "kinds": kinds,
            "utterances": {
                "scored": self.utterances,
                "missing": list(self.missing),
                "extra": list(self.extra),
                "dropped_spans": self.dropped_spans,
            },
            "diagnostics": [{"id": i, "message": m} for i, m in self.diagnostics],
        }


def _num(x: Fraction) -> float:
    return round(float(x), 6)


def score_corpus(
    refs: Mapping[str, AnnotatedTranscript],
    hyps: Mapping[str, AnnotatedTranscript],
    *,
    workers: int = 1,
    diagnostics: Iterable[tuple[str, str]] = (),
) -> ScoreReport:
    """Align and score every reference utterance against its hypothesis.

    A missing hypothesis scores as an empty transcript (all reference events
    become false negatives).  Hypothesis ids without a reference are reported
    as extras and not scored.
    """
    ids = sorted(refs)
    missing = tuple(i for i in ids if i not in hyps)
    extra = tuple(sorted(set(hyps) - set(refs)))

    def one(utt_id: str) -> UtteranceScore:
        hyp = hyps.get(utt_id)
        if hyp is None:
            hyp = AnnotatedTranscript()
        return score_utterance(refs[utt_id], hyp)

    if workers > 1 and len(ids) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            scores = list(pool.map(one, ids))
    else:
        scores = [one(i) for i in ids]

    return ScoreReport(
        counts=merge(s.counts for s in scores),
        category_counts=merge(s.category_counts for s in scores),
        utterances=len(ids),
        missing=missing,
        extra=extra,
        dropped_spans=sum(len(s.alignment.dropped) for s in scores),
        diagnostics=tuple(diagnostics),
    )
