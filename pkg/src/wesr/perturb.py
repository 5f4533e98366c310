"""Seeded synthetic hypotheses: word errors and tag drops/shifts/jitter.

Randomness comes from Python's ``random.Random`` (MT19937), consumed only
through ``.random()`` so the draw sequence is easy to replay elsewhere.  Every
word consumes exactly five draws; every discrete event two; every span three.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass
from typing import Iterable, Sequence

from .transcript import AnnotatedTranscript, DiscreteEvent, Span, is_cjk_word

EN_LEXICON = ("the", "a", "uh", "um", "and", "so", "well", "yeah", "okay", "right")
ZH_LEXICON = ("的", "了", "是", "我", "你", "嗯", "啊", "这", "那", "就")
EN_ALPHABET = "abcdefghijklmnopqrstuvwxyz"
ZH_ALPHABET = "天地人和山水火木金土"


@dataclass(frozen=True)
class PerturbSpec:
    sub_rate: float = 0.0
    ins_rate: float = 0.0
    del_rate: float = 0.0
    drop_prob: float = 0.0
    shift_offsets: tuple[int, ...] = (0,)
    jitter_deltas: tuple[int, ...] = (0,)
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("sub_rate", "ins_rate", "del_rate", "drop_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if not self.shift_offsets or not self.jitter_deltas:
            raise ValueError("offset and delta distributions must be non-empty")
        object.__setattr__(self, "shift_offsets", tuple(int(x) for x in self.shift_offsets))
        object.__setattr__(self, "jitter_deltas", tuple(int(x) for x in self.jitter_deltas))
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    def rng(self) -> random.Random:
        return random.Random(self.seed)


def derive_seed(seed: int, utt_id: str) -> int:
    """Per-utterance 64-bit seed: blake2b of the base seed and the id."""
    h = hashlib.blake2b(f"{seed}:{utt_id}".encode("utf-8"), digest_size=8)
    return int.from_bytes(h.digest(), "big")


def _pick(seq: Sequence, u: float):
    return seq[min(int(u * len(seq)), len(seq) - 1)]


def _substitute(word: str, u: float) -> str:
    """Lexicon word for u < 0.5, otherwise a one-character mutation."""
    cjk = is_cjk_word(word)
    if u < 0.5:
        lex = ZH_LEXICON if cjk else EN_LEXICON
        k = min(int(u * 2 * len(lex)), len(lex) - 1)
        out = lex[k]
        return lex[(k + 1) % len(lex)] if out == word else out
    alphabet = ZH_ALPHABET if cjk else EN_ALPHABET
    x = (u - 0.5) * 2 * len(word)
    pos = min(int(x), len(word) - 1)
    c = _pick(alphabet, x - int(x))
    if c == word[pos]:
        c = alphabet[(alphabet.index(c) + 1) % len(alphabet)]
    return word[:pos] + c + word[pos + 1:]


def perturb_words(t: AnnotatedTranscript, spec: PerturbSpec, rng: random.Random | None = None) -> AnnotatedTranscript:
    """Substitute, insert and delete words; tags follow their anchors.

    A span never loses all its words: if every word in it was drawn for
    deletion, its first word is kept.
    """
    rng = rng or spec.rng()
    n = len(t.words)
    plan = []
    for w in t.words:
        u = [rng.random() for _ in range(5)]
        plan.append(
            (
                u[0] < spec.del_rate,
                _substitute(w, u[2]) if u[1] < spec.sub_rate else w,
                _pick(ZH_LEXICON if is_cjk_word(w) else EN_LEXICON, u[4]) if u[3] < spec.ins_rate else None,
            )
        )
    deleted = [p[0] for p in plan]
    for s in sorted(t.spans, key=len):
        if all(deleted[s.start:s.end + 1]):
            deleted[s.start] = False

    words: list[str] = []
    gap_at = [0] * (n + 1)
    index: list[int | None] = [None] * n
    for i, (_, w, extra) in enumerate(plan):
        gap_at[i] = len(words)
        if not deleted[i]:
            index[i] = len(words)
            words.append(w)
        if extra is not None:
            words.append(extra)
    gap_at[n] = len(words)

    discrete = [DiscreteEvent(gap_at[e.gap], e.tag) for e in t.discrete]
    spans = []
    for s in t.spans:
        kept = [index[i] for i in range(s.start, s.end + 1) if index[i] is not None]
        spans.append(Span(kept[0], kept[-1], s.tag))
    return AnnotatedTranscript(tuple(words), tuple(discrete), tuple(spans))


def perturb_tags(t: AnnotatedTranscript, spec: PerturbSpec, rng: random.Random | None = None) -> AnnotatedTranscript:
    """Drop events, shift discrete gaps and jitter span endpoints.

    A jittered span that would overlap or cross another span keeps its
    original extent.
    """
    rng = rng or spec.rng()
    n = len(t.words)
    discrete = []
    for e in t.discrete:
        u_drop, u_shift = rng.random(), rng.random()
        if u_drop < spec.drop_prob:
            continue
        discrete.append(DiscreteEvent(min(max(e.gap + _pick(spec.shift_offsets, u_shift), 0), n), e.tag))

    candidates = []
    for s in t.spans:
        u_drop, u_a, u_b = rng.random(), rng.random(), rng.random()
        if u_drop < spec.drop_prob:
            continue
        start = min(max(s.start + _pick(spec.jitter_deltas, u_a), 0), n - 1)
        end = min(max(s.end + _pick(spec.jitter_deltas, u_b), start), n - 1)
        candidates.append((s, Span(start, end, s.tag)))

    # accepted spans plus the untouched originals still to come are always valid
    spans: list[Span] = []
    for k, (orig, moved) in enumerate(candidates):
        rest = [o for o, _ in candidates[k + 1:]]
        trial = AnnotatedTranscript(t.words, (), tuple(spans + [moved] + rest), language=t.language)
        spans.append(moved if trial.is_valid() else orig)
    return AnnotatedTranscript(t.words, tuple(discrete), tuple(spans), language=t.language)


def perturb(t: AnnotatedTranscript, spec: PerturbSpec, rng: random.Random | None = None) -> AnnotatedTranscript:
    """Word errors followed by tag perturbation, from one random stream."""
    rng = rng or spec.rng()
    return perturb_tags(perturb_words(t, spec, rng), spec, rng)


def perturb_corpus(
    items: Iterable[tuple[str, AnnotatedTranscript]], spec: PerturbSpec
) -> list[tuple[str, AnnotatedTranscript]]:
    """Perturb each utterance with a seed derived from ``spec.seed`` and its id."""
    return [(i, perturb(t, spec, random.Random(derive_seed(spec.seed, i)))) for i, t in items]
