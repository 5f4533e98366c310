"""Random transcript generators and independent oracles for the test suite."""

from __future__ import annotations

import random
from collections import Counter
from functools import lru_cache

from hypothesis import strategies as st

from wesr.taxonomy import TAGS, EventKind, lookup
from wesr.transcript import AnnotatedTranscript, DiscreteEvent, Span

DISCRETE = [t for t in TAGS if t.kind is EventKind.DISCRETE]
CONTINUOUS = [t for t in TAGS if t.kind is EventKind.CONTINUOUS]
EN_WORDS = ["the", "cat", "sat", "on", "mat", "i", "can't", "believe", "it", "oh", "no", "yes"]
ZH_WORDS = ["好", "的", "那", "我", "们", "住", "手", "快", "点", "走"]

# criterion number -> "ACCEPTANCE n: PASS ..." line, printed in the terminal summary
ACCEPTANCE: dict[int, str] = {}


def add_spans(words, candidates) -> list[Span]:
    """Keep candidate spans greedily while the set stays valid."""
    spans: list[Span] = []
    for s in candidates:
        trial = AnnotatedTranscript(tuple(words), (), tuple(spans + [s]))
        if trial.is_valid():
            spans.append(s)
    return spans


def random_transcript(
    rng: random.Random,
    max_words: int = 10,
    max_events: int = 4,
    vocab: list[str] | None = None,
    tags: list | None = None,
) -> AnnotatedTranscript:
    vocab = vocab or (EN_WORDS if rng.random() < 0.5 else ZH_WORDS)
    n = rng.randint(0, max_words)
    words = [rng.choice(vocab) for _ in range(n)]
    pool_d = [t for t in (tags or DISCRETE) if t.kind is EventKind.DISCRETE]
    pool_c = [t for t in (tags or CONTINUOUS) if t.kind is EventKind.CONTINUOUS]
    discrete, cands = [], []
    for _ in range(rng.randint(0, max_events)):
        if n and pool_c and rng.random() < 0.5:
            a = rng.randrange(n)
            b = rng.randrange(a, n)
            cands.append(Span(a, b, rng.choice(pool_c)))
        elif pool_d:
            discrete.append(DiscreteEvent(rng.randint(0, n), rng.choice(pool_d)))
    return AnnotatedTranscript(tuple(words), tuple(discrete), tuple(add_spans(words, cands)))


@st.composite
def transcripts(draw, max_words: int = 8, max_events: int = 4):
    vocab = draw(st.sampled_from([EN_WORDS, ZH_WORDS, EN_WORDS + ZH_WORDS]))
    words = draw(st.lists(st.sampled_from(vocab), max_size=max_words))
    n = len(words)
    discrete = draw(
        st.lists(st.builds(DiscreteEvent, st.integers(0, n), st.sampled_from(DISCRETE)), max_size=max_events)
    )
    cands = []
    if n:
        for a, b, tag in draw(
            st.lists(
                st.tuples(st.integers(0, n - 1), st.integers(0, n - 1), st.sampled_from(CONTINUOUS)),
                max_size=max_events,
            )
        ):
            cands.append(Span(min(a, b), max(a, b), tag))
    return AnnotatedTranscript(tuple(words), tuple(discrete), tuple(add_spans(words, cands)))


# --- oracles --------------------------------------------------------------------


def naive_levenshtein(a, b) -> int:
    a, b = tuple(a), tuple(b)

    @lru_cache(maxsize=None)
    def d(i: int, j: int) -> int:
        if i == 0:
            return j
        if j == 0:
            return i
        return min(d(i - 1, j) + 1, d(i, j - 1) + 1, d(i - 1, j - 1) + (a[i - 1] != b[j - 1]))

    return d(len(a), len(b))


def labelled(t: AnnotatedTranscript, position: int, name: str) -> bool:
    """Does ``t`` put ``name`` on unified position ``position``?  Direct rule check."""
    if position % 2 == 0:
        return any(e.gap == position // 2 and e.tag.name == name for e in t.discrete)
    i = (position - 1) // 2
    return any(s.start <= i <= s.end and s.tag.name == name for s in t.spans)


def enumerate_counts(ref: AnnotatedTranscript, hyp: AnnotatedTranscript, names) -> dict[str, tuple[int, int, int]]:
    """Brute-force TP/FP/FN over every (position, tag) pair."""
    n = len(ref.words)
    out = {}
    for name in names:
        tp = fp = fn = 0
        for p in range(2 * n + 1):
            r, h = labelled(ref, p, name), labelled(hyp, p, name)
            tp += r and h
            fp += h and not r
            fn += r and not h
        if tp or fp or fn:
            out[name] = (tp, fp, fn)
    return out


def all_configs(n: int, names=("laughs", "crying", "cough"), max_events: int = 2) -> list[AnnotatedTranscript]:
    """Every valid tag configuration over ``n`` words with at most ``max_events`` events."""
    words = tuple(f"w{i}" for i in range(n))
    singles = []
    for name in names:
        tag = lookup(name)
        if tag.kind is EventKind.DISCRETE:
            singles += [("d", DiscreteEvent(g, tag)) for g in range(n + 1)]
        else:
            singles += [("s", Span(a, b, tag)) for a in range(n) for b in range(a, n)]
    configs = {AnnotatedTranscript(words)}

    def build(chosen):
        d = tuple(e for k, e in chosen if k == "d")
        s = tuple(e for k, e in chosen if k == "s")
        return AnnotatedTranscript(words, d, s)

    for i, a in enumerate(singles):
        configs.add(build([a]))
        if max_events >= 2:
            for b in singles[i:]:
                t = build([a, b])
                if t.is_valid():
                    configs.add(t)
    return sorted(configs, key=repr)


def multiset(t: AnnotatedTranscript) -> Counter:
    return t.tag_multiset()
