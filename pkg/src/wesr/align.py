"""Event-preserving alignment of a tagged hypothesis onto reference words.

The hypothesis word sequence is rewritten into the reference word sequence
with a longest-matching-block diff, while every hypothesis event tag is carried
over to the position that best corresponds to where it was.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .transcript import AnnotatedTranscript, DiscreteEvent, Span


class InvariantViolation(AssertionError):
    pass


@dataclass(frozen=True)
class EditOp:
    kind: str  # equal | insert | delete | replace
    h_range: tuple[int, int]
    r_range: tuple[int, int]

    def as_tuple(self) -> tuple[str, int, int, int, int]:
        return (self.kind, *self.h_range, *self.r_range)

    def __str__(self) -> str:
        (i1, i2), (j1, j2) = self.h_range, self.r_range
        return f"{self.kind:<7} h={i1}:{i2} r={j1}:{j2}"


# --- longest-matching-block diff ----------------------------------------------


def _longest_match(a, b2j, alo, ahi, blo, bhi):
    # earliest block in a wins ties, then earliest in b
    best_i, best_j, best_k = alo, blo, 0
    j2len: dict[int, int] = {}
    for i in range(alo, ahi):
        new_j2len: dict[int, int] = {}
        for j in b2j.get(a[i], ()):
            if j < blo:
                continue
            if j >= bhi:
                break
            k = new_j2len[j] = j2len.get(j - 1, 0) + 1
            if k > best_k:
                best_i, best_j, best_k = i - k + 1, j - k + 1, k
        j2len = new_j2len
    return best_i, best_j, best_k


def matching_blocks(a: Sequence[str], b: Sequence[str]) -> list[tuple[int, int, int]]:
    """Maximal matching blocks ``(i, j, size)`` found by recursive longest-match."""
    b2j: dict[str, list[int]] = {}
    for j, x in enumerate(b):
        b2j.setdefault(x, []).append(j)
    blocks = []
    todo = [(0, len(a), 0, len(b))]
    while todo:
        alo, ahi, blo, bhi = todo.pop()
        i, j, k = _longest_match(a, b2j, alo, ahi, blo, bhi)
        if k:
            blocks.append((i, j, k))
            if alo < i and blo < j:
                todo.append((alo, i, blo, j))
            if i + k < ahi and j + k < bhi:
                todo.append((i + k, ahi, j + k, bhi))
    blocks.sort()

    merged: list[tuple[int, int, int]] = []
    for i, j, k in blocks:
        if merged and merged[-1][0] + merged[-1][2] == i and merged[-1][1] + merged[-1][2] == j:
            pi, pj, pk = merged[-1]
            merged[-1] = (pi, pj, pk + k)
        else:
            merged.append((i, j, k))
    return merged


def diff_opcodes(a: Sequence[str], b: Sequence[str]) -> list[EditOp]:
    """Edit operations turning ``a`` into ``b``; no junk heuristics."""
    ops: list[EditOp] = []
    i = j = 0
    for ai, bj, size in matching_blocks(a, b) + [(len(a), len(b), 0)]:
        if i < ai and j < bj:
            ops.append(EditOp("replace", (i, ai), (j, bj)))
        elif i < ai:
            ops.append(EditOp("delete", (i, ai), (j, bj)))
        elif j < bj:
            ops.append(EditOp("insert", (i, ai), (j, bj)))
        if size:
            ops.append(EditOp("equal", (ai, ai + size), (bj, bj + size)))
        i, j = ai + size, bj + size
    return ops


def relocate_gap(rel_gap: int, old_len: int, new_len: int) -> int:
    """Proportional gap mapping with half-up rounding."""
    if old_len == 0:
        return 0
    return (2 * rel_gap * new_len + old_len) // (2 * old_len)


# --- alignment ----------------------------------------------------------------


@dataclass
class _Marker:
    kind: str  # open | close | discrete
    gap: int
    event: int  # index into the discrete or span list
    target: int = 0
    owner: int = -1  # op index that mapped it
    mate: int = -1  # for open/close: index of the partner marker

    def label(self, hyp: AnnotatedTranscript) -> str:
        if self.kind == "discrete":
            return hyp.discrete[self.event].tag.render()
        name = hyp.spans[self.event].tag.name
        return f"<{name}>" if self.kind == "open" else f"</{name}>"


@dataclass(frozen=True)
class AlignmentResult:
    aligned: AnnotatedTranscript
    ops: tuple[EditOp, ...]
    substitutions: int
    insertions: int
    deletions: int
    dropped: tuple[Span, ...] = ()
    trace: tuple[str, ...] = field(default=(), compare=False)

    @property
    def counts(self) -> dict[str, int]:
        return {"S": self.substitutions, "I": self.insertions, "D": self.deletions}


def _markers(hyp: AnnotatedTranscript) -> list[_Marker]:
    n = len(hyp.words)
    by_gap: list[list[_Marker]] = [[] for _ in range(n + 1)]
    opens: dict[int, _Marker] = {}
    closes: dict[int, _Marker] = {}
    for si, s in enumerate(hyp.spans):
        opens[si] = _Marker("open", s.start, si)
        closes[si] = _Marker("close", s.end + 1, si)
    for g in range(n + 1):
        ending = [si for si, s in enumerate(hyp.spans) if s.end + 1 == g]
        ending.sort(key=lambda si: (hyp.spans[si].start, hyp.spans[si].tag.name), reverse=True)
        by_gap[g].extend(closes[si] for si in ending)
        by_gap[g].extend(_Marker("discrete", g, ei) for ei, e in enumerate(hyp.discrete) if e.gap == g)
        starting = [si for si, s in enumerate(hyp.spans) if s.start == g]
        starting.sort(key=lambda si: (-hyp.spans[si].end, hyp.spans[si].tag.name))
        by_gap[g].extend(opens[si] for si in starting)
    markers = [m for ms in by_gap for m in ms]
    index = {id(m): k for k, m in enumerate(markers)}
    for si in opens:
        opens[si].mate = index[id(closes[si])]
        closes[si].mate = index[id(opens[si])]
    return markers


def _gap_maps(ops: Sequence[EditOp], n: int):
    left = [-1] * (n + 1)
    right = [-1] * (n + 1)
    left_owner = [-1] * (n + 1)
    right_owner = [-1] * (n + 1)
    for oi, op in enumerate(ops):
        (i1, i2), (j1, j2) = op.h_range, op.r_range
        if op.kind == "insert":
            if left[i1] < 0:
                left[i1], left_owner[i1] = j1, oi
            right[i1], right_owner[i1] = j2, oi
            continue
        for g in range(i1, i2 + 1):
            if op.kind == "equal":
                t = j1 + g - i1
            elif op.kind == "replace":
                t = j1 + relocate_gap(g - i1, i2 - i1, j2 - j1)
            else:
                t = j1
            if left[g] < 0:
                left[g], left_owner[g] = t, oi
            right[g], right_owner[g] = t, oi
    if n == 0 and left[0] < 0:
        left[0] = right[0] = 0
    return left, right, left_owner, right_owner


def _upper_bounds(markers: list[_Marker], n_ref: int, dropped: set[int]) -> list[int]:
    upper = [n_ref] * len(markers)
    for k in range(len(markers) - 2, -1, -1):
        upper[k] = upper[k + 1]
        m = markers[k]
        if m.kind == "open" and m.event not in dropped:
            upper[k] = min(upper[k], upper[m.mate] - 1)
    return upper


def event_preserving_align(
    hyp: AnnotatedTranscript, ref_words: Sequence[str], *, with_trace: bool = False
) -> AlignmentResult:
    """Rewrite ``hyp`` so its words equal ``ref_words``, keeping all its tags.

    Opcodes come from the tag-free hypothesis words.  Equal regions shift tags
    with their words; deleted regions collapse their tags onto the deletion
    point; inserted reference words are spliced in after any tag at the
    insertion gap (span openings attach to the word that follows).  Tags inside
    a replaced segment are re-inserted proportionally.  A final pass widens
    spans left empty by the mapping, keeping the original order of all tag
    boundaries, so spans never cross or merge.
    """
    ref_words = tuple(ref_words)
    n, n_ref = len(hyp.words), len(ref_words)
    ops = diff_opcodes(hyp.words, ref_words)
    left, right, left_owner, right_owner = _gap_maps(ops, n)
    kinds = [""] * n
    for op in ops:
        for i in range(*op.h_range):
            kinds[i] = op.kind

    markers = _markers(hyp)
    for m in markers:
        if m.kind == "open":
            m.target, m.owner = right[m.gap], right_owner[m.gap]
        else:
            m.target, m.owner = left[m.gap], left_owner[m.gap]
    mapped = [m.target for m in markers]

    # a span whose words were all deleted leans toward the nearer surviving word
    for m in markers:
        if m.kind != "open" or markers[m.mate].target > m.target:
            continue
        s = hyp.spans[m.event]
        if any(kinds[i] != "delete" for i in range(s.start, s.end + 1)):
            continue
        lo = next((i for i in range(s.start - 1, -1, -1) if kinds[i] != "delete"), None)
        hi = next((i for i in range(s.end + 1, n) if kinds[i] != "delete"), None)
        if lo is not None and (hi is None or s.start - lo <= hi - s.end) and m.target > 0:
            m.target -= 1

    dropped: set[int] = set()
    while True:
        upper = _upper_bounds(markers, n_ref, dropped)
        bad = [k for k, m in enumerate(markers) if m.kind == "open" and m.event not in dropped and upper[k] < 0]
        if not bad:
            break
        # the reference is too short to hold every span; give up the last offender
        dropped.add(markers[bad[-1]].event)

    prev = 0
    for k, m in enumerate(markers):
        if m.kind != "discrete" and m.event in dropped:
            continue
        lo = max(m.target, prev)
        if m.kind == "close":
            lo = max(lo, markers[m.mate].target + 1)
        m.target = min(lo, upper[k])
        prev = m.target

    discrete = [DiscreteEvent(m.target, hyp.discrete[m.event].tag) for m in markers if m.kind == "discrete"]
    spans = []
    for m in markers:
        if m.kind == "open" and m.event not in dropped:
            spans.append(Span(m.target, markers[m.mate].target - 1, hyp.spans[m.event].tag))
    aligned = AnnotatedTranscript(ref_words, tuple(discrete), tuple(spans))

    subs = ins = dels = 0
    for op in ops:
        lh, lr = op.h_range[1] - op.h_range[0], op.r_range[1] - op.r_range[0]
        if op.kind == "replace":
            subs += min(lh, lr)
            ins += max(0, lh - lr)
            dels += max(0, lr - lh)
        elif op.kind == "delete":
            ins += lh
        elif op.kind == "insert":
            dels += lr

    lost = tuple(hyp.spans[i] for i in sorted(dropped))
    _check(hyp, aligned, ref_words, lost)
    trace = _trace(hyp, ops, markers, mapped, dropped) if with_trace else ()
    return AlignmentResult(aligned, tuple(ops), subs, ins, dels, lost, trace)


def _check(hyp, aligned, ref_words, lost) -> None:
    if aligned.words != tuple(ref_words):
        raise InvariantViolation("aligned words differ from the reference")
    expected = hyp.tag_multiset()
    expected.subtract(s.tag.name for s in lost)
    if +expected != aligned.tag_multiset():
        raise InvariantViolation(f"tags not conserved: {dict(+expected)} -> {dict(aligned.tag_multiset())}")
    problems = aligned.problems()
    if problems:
        raise InvariantViolation("; ".join(problems))


def _trace(hyp, ops, markers, mapped, dropped) -> tuple[str, ...]:
    lines = []
    for oi, op in enumerate(ops):
        lines.append(str(op))
        for k, m in enumerate(markers):
            if m.owner != oi:
                continue
            if m.kind != "discrete" and m.event in dropped:
                lines.append(f"    {m.label(hyp)} gap {m.gap} -> dropped")
            elif op.kind != "equal" or m.target != mapped[k]:
                note = "" if m.target == mapped[k] else f" (adjusted from {mapped[k]})"
                lines.append(f"    {m.label(hyp)} gap {m.gap} -> {m.target}{note}")
    return tuple(lines)
