"""Tokenization, parsing and serialization of event-tagged transcripts.

Surface grammar::

    [name]              discrete event at the gap where it occurs
    <name> ... </name>  continuous event over the enclosed words

Words are indexed ``0..N-1`` and gaps ``0..N`` (gap ``g`` precedes word ``g``).
"""

from __future__ import annotations

import enum
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Literal

from .taxonomy import EventKind, EventTag, UnknownTag, lookup

Mode = Literal["strict", "lenient"]

DELIMITERS = frozenset("[]<>")


class InvalidTranscript(ValueError):
    pass


class DiagnosticKind(str, enum.Enum):
    UNKNOWN_TAG = "UnknownTag"
    UNCLOSED_SPAN = "UnclosedSpan"
    CLOSE_WITHOUT_OPEN = "CloseWithoutOpen"
    CROSSING_SPANS = "CrossingSpans"
    EMPTY_SPAN = "EmptySpan"
    MALFORMED_DELIMITER = "MalformedDelimiter"


@dataclass(frozen=True)
class ParseDiagnostic:
    kind: DiagnosticKind
    offset: int  # UTF-8 byte offset into the input
    message: str

    def __str__(self) -> str:
        return f"{self.kind.value} at byte {self.offset}: {self.message}"


class ParseError(ValueError):
    def __init__(self, diagnostics: list[ParseDiagnostic]):
        self.diagnostics = diagnostics
        super().__init__(str(diagnostics[0]))

    @property
    def diagnostic(self) -> ParseDiagnostic:
        return self.diagnostics[0]


# --- character classes --------------------------------------------------------

_CJK_RANGES = (
    (0x3040, 0x30FF),  # hiragana, katakana
    (0x3400, 0x4DBF),
    (0x4E00, 0x9FFF),
    (0xF900, 0xFAFF),
    (0x20000, 0x2FA1F),
)


def is_cjk(ch: str) -> bool:
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _CJK_RANGES) and unicodedata.category(ch)[0] == "L"


def _is_punct(ch: str) -> bool:
    return ch in DELIMITERS or unicodedata.category(ch)[0] in "PS"


def _is_wordish(ch: str) -> bool:
    return not ch.isspace() and not _is_punct(ch) and not is_cjk(ch)


_NORMALIZE = {cp: cp - 0xFEE0 for cp in range(0xFF01, 0xFF5F)}
_NORMALIZE.update({0x3000: 0x20, 0x2019: 0x27, 0x2018: 0x27})


def normalize_text(text: str, lowercase: bool = True) -> str:
    """Full-width ASCII to half-width, curly apostrophes to ``'``, optional lowercasing."""
    text = text.translate(_NORMALIZE)
    return text.lower() if lowercase else text


def tokenize(text: str, *, split_cjk: bool = True, normalize: bool = True) -> list[str]:
    """Split tag-free text into words.

    Latin-script runs split on whitespace; every CJK codepoint becomes its own
    token (or, with ``split_cjk=False``, each CJK run stays whole).  Leading and
    trailing punctuation is stripped from every token and empty tokens dropped.
    """
    if normalize:
        text = normalize_text(text)
    tokens: list[str] = []
    for chunk in text.split():
        buf: list[str] = []
        buf_cjk = False
        for ch in chunk:
            if ch in DELIMITERS:
                _flush(buf, tokens)
                continue
            cjk = is_cjk(ch)
            if cjk and split_cjk:
                _flush(buf, tokens)
                tokens.append(ch)
                continue
            if buf and cjk != buf_cjk:
                _flush(buf, tokens)
            buf.append(ch)
            buf_cjk = cjk
        _flush(buf, tokens)
    return tokens


def _flush(buf: list[str], out: list[str]) -> None:
    if not buf:
        return
    word = "".join(buf)
    buf.clear()
    start, end = 0, len(word)
    while start < end and _is_punct(word[start]):
        start += 1
    while end > start and _is_punct(word[end - 1]):
        end -= 1
    if start < end:
        out.append(word[start:end])


def is_cjk_word(word: str) -> bool:
    return bool(word) and is_cjk(word[0])


def detect_language(words: Iterable[str]) -> str:
    has_cjk = has_latin = False
    for w in words:
        if any(is_cjk(c) for c in w):
            has_cjk = True
        if any(c.isalpha() and not is_cjk(c) for c in w):
            has_latin = True
    if has_cjk:
        return "mixed" if has_latin else "zh"
    return "en" if has_latin else "unknown"


# --- structure ----------------------------------------------------------------


@dataclass(frozen=True)
class DiscreteEvent:
    gap: int
    tag: EventTag


@dataclass(frozen=True)
class Span:
    start: int
    end: int  # inclusive
    tag: EventTag

    def __len__(self) -> int:
        return self.end - self.start + 1

    def overlaps(self, other: Span) -> bool:
        return self.start <= other.end and other.start <= self.end

    def crosses(self, other: Span) -> bool:
        a, b = (self, other) if self.start <= other.start else (other, self)
        return a.start < b.start <= a.end < b.end


def _discrete_key(e: DiscreteEvent) -> tuple:
    return (e.gap, e.tag.name)


def _span_key(s: Span) -> tuple:
    return (s.start, -s.end, s.tag.name)


@dataclass(frozen=True)
class AnnotatedTranscript:
    words: tuple[str, ...] = ()
    discrete: tuple[DiscreteEvent, ...] = ()
    spans: tuple[Span, ...] = ()
    language: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "words", tuple(self.words))
        object.__setattr__(self, "discrete", tuple(sorted(self.discrete, key=_discrete_key)))
        object.__setattr__(self, "spans", tuple(sorted(self.spans, key=_span_key)))
        if not self.language:
            object.__setattr__(self, "language", detect_language(self.words))

    def __len__(self) -> int:
        return len(self.words)

    @property
    def n_events(self) -> int:
        return len(self.discrete) + len(self.spans)

    def tag_multiset(self) -> Counter:
        """Tag name counts with each span counted once."""
        c = Counter(e.tag.name for e in self.discrete)
        c.update(s.tag.name for s in self.spans)
        return c

    def without_tags(self) -> AnnotatedTranscript:
        return AnnotatedTranscript(self.words, language=self.language)

    def problems(self) -> list[str]:
        n = len(self.words)
        out = []
        for i, w in enumerate(self.words):
            if not w or any(c.isspace() or c in DELIMITERS for c in w):
                out.append(f"word {i} {w!r} is empty or contains whitespace/tag delimiters")
        for e in self.discrete:
            if e.tag.kind is not EventKind.DISCRETE:
                out.append(f"{e.tag.name} is not a discrete tag")
            if not 0 <= e.gap <= n:
                out.append(f"[{e.tag.name}] gap {e.gap} outside 0..{n}")
        for s in self.spans:
            if s.tag.kind is not EventKind.CONTINUOUS:
                out.append(f"{s.tag.name} is not a continuous tag")
            if not 0 <= s.start <= s.end <= n - 1:
                out.append(f"<{s.tag.name}> span {s.start}..{s.end} outside 0..{n - 1}")
        for i, a in enumerate(self.spans):
            for b in self.spans[i + 1:]:
                if a.tag == b.tag and a.overlaps(b):
                    out.append(f"overlapping <{a.tag.name}> spans {a.start}..{a.end} and {b.start}..{b.end}")
                elif a.crosses(b):
                    out.append(
                        f"<{a.tag.name}> {a.start}..{a.end} crosses <{b.tag.name}> {b.start}..{b.end}"
                    )
        return out

    def is_valid(self) -> bool:
        return not self.problems()

    def check(self) -> AnnotatedTranscript:
        problems = self.problems()
        if problems:
            raise InvalidTranscript("; ".join(problems))
        return self


# --- parsing ------------------------------------------------------------------

_TAG_RE = re.compile(r"\[([^\[\]<>\n]*)\]|<(/?)([^\[\]<>\n]*)>")
_NAME_RE = re.compile(r"[A-Za-z][A-Za-z0-9_ \-]*")
_WELL_FORMED_RE = re.compile(r"\[\s*[A-Za-z][A-Za-z0-9_ \-]*\]|</?\s*[A-Za-z][A-Za-z0-9_ \-]*>")


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.words: list[str] = []
        self.discrete: list[DiscreteEvent] = []
        self.spans: list[Span] = []
        self.diags: list[ParseDiagnostic] = []
        self.stack: list[tuple[EventTag, int, int]] = []  # tag, first word, char offset
        self.ignored_opens: Counter = Counter()
        self.force_closed: Counter = Counter()

    def diag(self, kind: DiagnosticKind, pos: int, message: str) -> None:
        offset = len(self.text[:pos].encode("utf-8"))
        self.diags.append(ParseDiagnostic(kind, offset, message))

    def segment(self, start: int, end: int) -> None:
        seg = self.text[start:end]
        for i, ch in enumerate(seg):
            if ch in DELIMITERS:
                self.diag(DiagnosticKind.MALFORMED_DELIMITER, start + i, f"stray {ch!r}")
        self.words.extend(tokenize(seg))

    def run(self) -> None:
        text = self.text
        pos = 0
        glue_left = False  # a word character sits immediately before the current tag run
        glue_at = -1
        for m in _TAG_RE.finditer(text):
            if m.start() > pos:
                seg = text[pos:m.start()]
                if glue_left and _is_wordish(seg[0]):
                    self.diag(DiagnosticKind.MALFORMED_DELIMITER, glue_at, "tag inside a word")
                self.segment(pos, m.start())
                glue_left = _is_wordish(seg[-1])
                glue_at = m.start()
            elif pos == 0:
                glue_at = m.start()
            self.tag(m)
            pos = m.end()
        if pos < len(text):
            if glue_left and _is_wordish(text[pos]):
                self.diag(DiagnosticKind.MALFORMED_DELIMITER, glue_at, "tag inside a word")
            self.segment(pos, len(text))
        self.finish()

    def tag(self, m: re.Match) -> None:
        if m.group(1) is not None:
            raw, closing, discrete = m.group(1), False, True
        else:
            raw, closing, discrete = m.group(3), m.group(2) == "/", False
        name = raw.strip()
        if closing and not name:
            self.close(None, m)
            return
        if not _NAME_RE.fullmatch(name):
            self.diag(DiagnosticKind.MALFORMED_DELIMITER, m.start(), f"bad tag name in {m.group(0)!r}")
            return
        try:
            tag = lookup(f"[{name}]" if discrete else name)
        except UnknownTag:
            self.diag(DiagnosticKind.UNKNOWN_TAG, m.start(), f"unknown tag {m.group(0)!r}")
            return
        want = EventKind.DISCRETE if discrete else EventKind.CONTINUOUS
        if tag.kind is not want:
            self.diag(
                DiagnosticKind.UNKNOWN_TAG,
                m.start(),
                f"{tag.name} is {tag.kind.value} but written as {m.group(0)!r}",
            )
            return
        if discrete:
            self.discrete.append(DiscreteEvent(len(self.words), tag))
        elif closing:
            self.close(tag, m)
        else:
            self.open(tag, m)

    def open(self, tag: EventTag, m: re.Match) -> None:
        if any(t == tag for t, _, _ in self.stack):
            self.diag(DiagnosticKind.CROSSING_SPANS, m.start(), f"<{tag.name}> nested inside open <{tag.name}>")
            self.ignored_opens[tag] += 1
            return
        self.stack.append((tag, len(self.words), m.start()))

    def close(self, tag: EventTag | None, m: re.Match) -> None:
        if tag is not None:
            if self.ignored_opens[tag]:
                self.ignored_opens[tag] -= 1
                return
            if self.force_closed[tag]:
                self.force_closed[tag] -= 1
                return
            idx = next((i for i in range(len(self.stack) - 1, -1, -1) if self.stack[i][0] == tag), None)
        else:
            idx = len(self.stack) - 1 if self.stack else None
        if idx is None:
            self.diag(DiagnosticKind.CLOSE_WITHOUT_OPEN, m.start(), f"{m.group(0)!r} without matching open")
            return
        if idx != len(self.stack) - 1:
            inner = ", ".join(f"<{t.name}>" for t, _, _ in self.stack[idx + 1:])
            self.diag(DiagnosticKind.CROSSING_SPANS, m.start(), f"{m.group(0)!r} closes across open {inner}")
            while len(self.stack) > idx + 1:
                t, first, at = self.stack.pop()
                self.force_closed[t] += 1
                self.emit(t, first, at)
        t, first, at = self.stack.pop()
        self.emit(t, first, at)

    def emit(self, tag: EventTag, first: int, at: int) -> None:
        last = len(self.words) - 1
        if last < first:
            self.diag(DiagnosticKind.EMPTY_SPAN, at, f"<{tag.name}> encloses no words")
            return
        self.spans.append(Span(first, last, tag))

    def finish(self) -> None:
        while self.stack:
            t, first, at = self.stack.pop()
            self.diag(DiagnosticKind.UNCLOSED_SPAN, at, f"<{t.name}> is never closed")
            self.emit(t, first, at)


def _decode(text: str | bytes) -> str:
    if isinstance(text, bytes):
        return text.decode("utf-8")
    text.encode("utf-8")  # rejects lone surrogates
    return text


def parse_lenient(text: str | bytes, language: str | None = None) -> tuple[AnnotatedTranscript, list[ParseDiagnostic]]:
    """Parse, repairing problems instead of failing; returns the diagnostics found."""
    p = _Parser(_decode(text))
    p.run()
    t = AnnotatedTranscript(tuple(p.words), tuple(p.discrete), tuple(p.spans), language or "")
    return t, p.diags


def parse(text: str | bytes, mode: Mode = "strict", language: str | None = None) -> AnnotatedTranscript:
    """Parse tagged text into an :class:`AnnotatedTranscript`.

    Strict mode raises :class:`ParseError` on any diagnostic; lenient mode drops
    unknown tags and empty spans and closes unclosed spans at the end.
    Non-UTF-8 input raises :class:`UnicodeError` in both modes.
    """
    if mode not in ("strict", "lenient"):
        raise ValueError(f"mode must be 'strict' or 'lenient', not {mode!r}")
    t, diags = parse_lenient(text, language)
    if mode == "strict" and diags:
        raise ParseError(diags)
    return t


def strip_tags(text: str) -> str:
    """Remove well-formed tag tokens and collapse whitespace."""
    out: list[str] = []
    pos = 0
    tagged = False
    for m in _WELL_FORMED_RE.finditer(text):
        _append_plain(out, text[pos:m.start()], tagged)
        tagged = True
        pos = m.end()
    _append_plain(out, text[pos:], tagged)
    return " ".join("".join(out).split())


def _append_plain(out: list[str], piece: str, after_tag: bool) -> None:
    if not piece:
        return
    if after_tag and out:
        left, right = out[-1][-1], piece[0]
        if not left.isspace() and not right.isspace() and not (is_cjk(left) and is_cjk(right)):
            out.append(" ")
    out.append(piece)


# --- serialization ------------------------------------------------------------


def serialize(t: AnnotatedTranscript) -> str:
    """Render a transcript back to tagged text.

    Latin words are space-separated and adjacent CJK characters are joined
    directly.  At each gap, closing tags come first, then discrete events, then
    opening tags.
    """
    t.check()
    n = len(t.words)
    pieces: list[tuple[str, int | None]] = []  # (text, word index or None)
    for g in range(n + 1):
        closing = sorted((s for s in t.spans if s.end == g - 1), key=lambda s: (s.start, s.tag.name), reverse=True)
        pieces.extend((f"</{s.tag.name}>", None) for s in closing)
        pieces.extend((e.tag.render(), None) for e in t.discrete if e.gap == g)
        opening = sorted((s for s in t.spans if s.start == g), key=lambda s: (-s.end, s.tag.name))
        pieces.extend((s.tag.render(), None) for s in opening)
        if g < n:
            pieces.append((t.words[g], g))
    if not pieces:
        return ""

    cjk = [is_cjk_word(w) for w in t.words]
    # nearest word at/before and at/after each piece
    left_word: list[int | None] = []
    last = None
    for _, wi in pieces:
        if wi is not None:
            last = wi
        left_word.append(last)
    right_word: list[int | None] = [None] * len(pieces)
    nxt = None
    for i in range(len(pieces) - 1, -1, -1):
        if pieces[i][1] is not None:
            nxt = pieces[i][1]
        right_word[i] = nxt

    out = [pieces[0][0]]
    for i in range(1, len(pieces)):
        lw, rw = left_word[i - 1], right_word[i]
        sides = [cjk[w] for w in (lw, rw) if w is not None]
        out.append("" if sides and all(sides) else " ")
        out.append(pieces[i][0])
    return "".join(out)
