"""JSONL manifests and hypothesis files, corpus statistics, external-dataset import."""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterable, Iterator

from .taxonomy import (
    TAGS,
    Category,
    EventKind,
    ExternalMapping,
    UnknownExternalTag,
    dataset_id,
    default_mapping,
)
from .transcript import AnnotatedTranscript, ParseDiagnostic, ParseError, detect_language, parse

LANGUAGES = ("en", "zh", "mixed")


class CorpusError(Exception):
    pass


class SchemaError(CorpusError):
    def __init__(self, path: str | Path, line: int, message: str):
        self.path, self.line = str(path), line
        super().__init__(f"{path}:{line}: {message}")


class DuplicateId(CorpusError):
    def __init__(self, utt_id: str, path: str | Path = "", line: int = 0):
        self.id, self.path, self.line = utt_id, str(path), line
        where = f" ({path}:{line})" if path else ""
        super().__init__(f"duplicate id {utt_id!r}{where}")


class ParseFailure(CorpusError):
    def __init__(self, utt_id: str, diagnostics: list[ParseDiagnostic]):
        self.id, self.diagnostics = utt_id, diagnostics
        super().__init__(f"{utt_id}: {diagnostics[0]}")

    @property
    def diagnostic(self) -> ParseDiagnostic:
        return self.diagnostics[0]


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    text: str
    language: str
    audio: str | None = None
    source: str | None = None
    duration_seconds: float | None = None
    transcript: AnnotatedTranscript | None = field(default=None, compare=False, repr=False)

    def parsed(self) -> AnnotatedTranscript:
        if self.transcript is not None:
            return self.transcript
        try:
            return parse(self.text, "strict", self.language)
        except ParseError as e:
            raise ParseFailure(self.id, e.diagnostics) from None

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {"id": self.id, "text": self.text, "language": self.language}
        for k in ("audio", "source", "duration_seconds"):
            v = getattr(self, k)
            if v is not None:
                out[k] = v
        return out


def _records(path: str | Path) -> Iterator[tuple[int, Any]]:
    with open(path, encoding="utf-8") as f:
        for ln, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                yield ln, json.loads(line)
            except json.JSONDecodeError as e:
                raise SchemaError(path, ln, f"invalid JSON: {e.msg}") from None


def _entry_from(obj: Any, path: str | Path, ln: int) -> ManifestEntry:
    if not isinstance(obj, dict):
        raise SchemaError(path, ln, "record is not a JSON object")
    for k in ("id", "text", "language"):
        if not isinstance(obj.get(k), str):
            raise SchemaError(path, ln, f"missing or non-string {k!r}")
    if obj["language"] not in LANGUAGES:
        raise SchemaError(path, ln, f"language must be one of {LANGUAGES}, got {obj['language']!r}")
    for k in ("audio", "source"):
        if obj.get(k) is not None and not isinstance(obj[k], str):
            raise SchemaError(path, ln, f"{k!r} must be a string")
    dur = obj.get("duration_seconds")
    if dur is not None and (isinstance(dur, bool) or not isinstance(dur, (int, float)) or dur < 0):
        raise SchemaError(path, ln, "'duration_seconds' must be a non-negative number")
    return ManifestEntry(obj["id"], obj["text"], obj["language"], obj.get("audio"), obj.get("source"), dur)


def read_manifest(path: str | Path) -> list[ManifestEntry]:
    """Schema- and id-checked entries, transcripts not yet parsed."""
    entries, seen = [], set()
    for ln, obj in _records(path):
        e = _entry_from(obj, path, ln)
        if e.id in seen:
            raise DuplicateId(e.id, path, ln)
        seen.add(e.id)
        entries.append(e)
    return entries


def load_manifest(path: str | Path) -> list[ManifestEntry]:
    """Load a manifest, strict-parsing every transcript.

    Raises OSError, SchemaError, DuplicateId or ParseFailure.
    """
    out = []
    for e in read_manifest(path):
        t = e.parsed()
        out.append(ManifestEntry(e.id, e.text, e.language, e.audio, e.source, e.duration_seconds, t))
    return out


def load_hypotheses(path: str | Path) -> dict[str, str]:
    hyps: dict[str, str] = {}
    for ln, obj in _records(path):
        if not isinstance(obj, dict) or not isinstance(obj.get("id"), str) or not isinstance(obj.get("text"), str):
            raise SchemaError(path, ln, "expected an object with string 'id' and 'text'")
        if obj["id"] in hyps:
            raise DuplicateId(obj["id"], path, ln)
        hyps[obj["id"]] = obj["text"]
    return hyps


def write_jsonl(records: Iterable[dict], fp) -> None:
    for r in records:
        fp.write(json.dumps(r, ensure_ascii=False) + "\n")


# --- statistics ---------------------------------------------------------------

BUCKETS = ("1", "2", ">=3")


def _bucket(n: int) -> str:
    return BUCKETS[min(n, 3) - 1]


@dataclass(frozen=True)
class CorpusStats:
    utterances: int
    tagged_utterances: int
    total_tags: int
    total_tag_hist: dict[str, int]
    unique_tag_hist: dict[str, int]
    per_tag: dict[str, int]
    per_category: dict[str, int]
    continuous: int
    discrete: int
    language_by_count: dict[str, Fraction]
    language_by_duration: dict[str, Fraction] | None

    @property
    def continuous_share(self) -> Fraction:
        return Fraction(self.continuous, self.total_tags) if self.total_tags else Fraction(0)

    @property
    def discrete_share(self) -> Fraction:
        return Fraction(self.discrete, self.total_tags) if self.total_tags else Fraction(0)

    def hist_percent(self, hist: dict[str, int]) -> dict[str, float]:
        n = self.tagged_utterances
        return {k: round(100 * v / n, 2) if n else 0.0 for k, v in hist.items()}

    def to_dict(self) -> dict[str, Any]:
        def shares(d):
            return None if d is None else {k: round(float(v), 6) for k, v in d.items()}

        return {
            "utterances": self.utterances,
            "tagged_utterances": self.tagged_utterances,
            "total_tags": self.total_tags,
            "total_tags_per_utterance": {
                "counts": self.total_tag_hist,
                "percent": self.hist_percent(self.total_tag_hist),
            },
            "unique_tags_per_utterance": {
                "counts": self.unique_tag_hist,
                "percent": self.hist_percent(self.unique_tag_hist),
            },
            "per_tag": self.per_tag,
            "per_category": self.per_category,
            "kinds": {
                "continuous": self.continuous,
                "discrete": self.discrete,
                "continuous_share": round(float(self.continuous_share), 6),
                "discrete_share": round(float(self.discrete_share), 6),
            },
            "language_share": {
                "by_utterances": shares(self.language_by_count),
                "by_duration": shares(self.language_by_duration),
            },
        }


def compute_stats(entries: Iterable[ManifestEntry]) -> CorpusStats:
    """Per-utterance tag statistics.

    Each span counts as one occurrence; repeated tag names in an utterance count
    once towards its unique-tag bucket.  Tag-free utterances are counted in
    ``utterances`` but left out of the histograms.
    """
    total_hist = dict.fromkeys(BUCKETS, 0)
    unique_hist = dict.fromkeys(BUCKETS, 0)
    per_tag: Counter = Counter()
    n = tagged = 0
    lang_count: Counter = Counter()
    lang_dur: Counter = Counter()
    have_durations = True
    for e in entries:
        t = e.parsed()
        n += 1
        lang_count[e.language] += 1
        if e.duration_seconds is None:
            have_durations = False
        else:
            lang_dur[e.language] += Fraction(e.duration_seconds)
        tags = t.tag_multiset()
        k = sum(tags.values())
        if not k:
            continue
        tagged += 1
        total_hist[_bucket(k)] += 1
        unique_hist[_bucket(len(tags))] += 1
        per_tag.update(tags)

    by_kind = Counter()
    by_cat = Counter()
    for tag in TAGS:
        by_kind[tag.kind] += per_tag[tag.name]
        by_cat[tag.category.value] += per_tag[tag.name]
    total = sum(per_tag.values())
    dur_total = sum(lang_dur.values())
    return CorpusStats(
        utterances=n,
        tagged_utterances=tagged,
        total_tags=total,
        total_tag_hist=total_hist,
        unique_tag_hist=unique_hist,
        per_tag={t.name: per_tag[t.name] for t in TAGS},
        per_category={c.value: by_cat[c.value] for c in Category},
        continuous=by_kind[EventKind.CONTINUOUS],
        discrete=by_kind[EventKind.DISCRETE],
        language_by_count={k: Fraction(v, n) for k, v in sorted(lang_count.items())},
        language_by_duration=(
            {k: v / dur_total for k, v in sorted(lang_dur.items())} if n and have_durations and dur_total else None
        ),
    )


# --- external datasets --------------------------------------------------------


@dataclass(frozen=True)
class Exclusion:
    id: str
    reason: str  # outside_taxonomy | unknown_tag | kind_mismatch | parse_error
    raw_tag: str

    def to_json(self) -> dict[str, str]:
        return {"id": self.id, "reason": self.reason, "raw_tag": self.raw_tag}


_EXT_TAG_RE = re.compile(r"\[([^\[\]<>]+)\]|<(/?)([^\[\]<>/][^\[\]<>]*)>")


class _Excluded(Exception):
    def __init__(self, reason: str, raw: str):
        self.reason, self.raw = reason, raw


def _rewrite(ds: str, text: str, mapping: ExternalMapping) -> str:
    def sub(m: re.Match) -> str:
        raw = m.group(0)
        name = m.group(1) if m.group(1) is not None else m.group(3)
        try:
            tag = mapping.map(ds, name)
        except UnknownExternalTag:
            raise _Excluded("unknown_tag", raw) from None
        if tag is None:
            raise _Excluded("outside_taxonomy", raw)
        want = EventKind.DISCRETE if m.group(1) is not None else EventKind.CONTINUOUS
        if tag.kind is not want:
            raise _Excluded("kind_mismatch", raw)
        if m.group(2):
            return f"</{tag.name}>"
        return tag.render()

    return _EXT_TAG_RE.sub(sub, text)


def normalize_external(
    dataset: str, records: Iterable[dict], mapping: ExternalMapping | None = None
) -> tuple[list[ManifestEntry], list[Exclusion]]:
    """Rewrite records from a prior dataset into WESR manifest entries.

    Records with any tag outside the taxonomy (or not in the dataset's known
    inventory) are dropped and listed in the exclusion report.
    """
    ds = dataset_id(dataset)
    mapping = mapping or default_mapping()
    kept: list[ManifestEntry] = []
    dropped: list[Exclusion] = []
    for rec in records:
        rid = str(rec.get("id", ""))
        try:
            text = _rewrite(ds, str(rec.get("text", "")), mapping)
        except _Excluded as e:
            dropped.append(Exclusion(rid, e.reason, e.raw))
            continue
        try:
            t = parse(text, "strict")
        except ParseError as e:
            dropped.append(Exclusion(rid, "parse_error", e.diagnostic.message))
            continue
        lang = rec.get("language")
        if lang not in LANGUAGES:
            lang = detect_language(t.words)
            lang = lang if lang in LANGUAGES else "mixed"
        dur = rec.get("duration_seconds")
        kept.append(ManifestEntry(rid, text, lang, rec.get("audio"), ds, dur, t))
    return kept, dropped
