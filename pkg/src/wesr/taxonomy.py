"""Vocal-event tag registry, category aggregation and external-dataset mapping."""

from __future__ import annotations

import enum
import json
import re
import string
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping


class TaxonomyError(ValueError):
    pass


class UnknownTag(TaxonomyError):
    pass


class UnknownDataset(TaxonomyError):
    pass


class UnknownExternalTag(TaxonomyError):
    pass


class EventKind(str, enum.Enum):
    DISCRETE = "discrete"
    CONTINUOUS = "continuous"


class Category(str, enum.Enum):
    LAUGH = "LAUGH"
    SHOUT = "SHOUT"
    WHISPERING = "WHISPERING"
    SINGING = "SINGING"
    BREATHING = "BREATHING"
    COUGH = "COUGH"
    CRYING = "CRYING"


@dataclass(frozen=True, order=True)
class EventTag:
    name: str
    kind: EventKind
    category: Category

    @property
    def is_discrete(self) -> bool:
        return self.kind is EventKind.DISCRETE

    def render(self) -> str:
        """Surface form of the tag: ``[name]`` or ``<name>``."""
        if self.is_discrete:
            return f"[{self.name}]"
        return f"<{self.name}>"

    def __str__(self) -> str:
        return self.render()


_D, _C = EventKind.DISCRETE, EventKind.CONTINUOUS

# Row order follows the per-tag result table: continuous first, then discrete.
_TAG_ROWS = (
    ("crying", _C, Category.CRYING),
    ("laughing", _C, Category.LAUGH),
    ("panting", _C, Category.BREATHING),
    ("shouting", _C, Category.SHOUT),
    ("singing", _C, Category.SINGING),
    ("whispering", _C, Category.WHISPERING),
    ("breathing", _D, Category.BREATHING),
    ("chuckle", _D, Category.LAUGH),
    ("clear_throat", _D, Category.COUGH),
    ("cough", _D, Category.COUGH),
    ("crowd_laughter", _D, Category.LAUGH),
    ("cry", _D, Category.CRYING),
    ("exhale", _D, Category.BREATHING),
    ("giggle", _D, Category.LAUGH),
    ("inhale", _D, Category.BREATHING),
    ("laughs", _D, Category.LAUGH),
    ("roar", _D, Category.SHOUT),
    ("scream", _D, Category.SHOUT),
    ("shout", _D, Category.SHOUT),
    ("sigh", _D, Category.BREATHING),
    ("sobbing", _D, Category.CRYING),
)

TAGS: tuple[EventTag, ...] = tuple(EventTag(n, k, c) for n, k, c in _TAG_ROWS)
_BY_NAME: dict[str, EventTag] = {t.name: t for t in TAGS}

# Aliases that only apply to the square-bracket (discrete) surface form.
_DISCRETE_ALIASES = {"crying": "cry"}

_DELIMS = "[]<>/"
_SEP_RE = re.compile(r"[\s\-]+")


def canonicalize(raw: str) -> str:
    """Normalize a raw tag string to its canonical name.

    Delimiters and surrounding whitespace are trimmed, the name is lowercased
    and runs of spaces or hyphens become a single underscore.  The discrete
    surface form ``[crying]`` resolves to ``cry``.  Unknown names pass through.
    """
    s = raw.strip()
    bracketed = s.startswith("[") and s.endswith("]")
    name = _SEP_RE.sub("_", s.strip(_DELIMS + string.whitespace).lower())
    if bracketed:
        name = _DISCRETE_ALIASES.get(name, name)
    return name


def lookup(name: str) -> EventTag:
    canon = canonicalize(name)
    try:
        return _BY_NAME[canon]
    except KeyError:
        raise UnknownTag(f"unknown event tag: {name!r}") from None


def is_known(name: str) -> bool:
    return canonicalize(name) in _BY_NAME


def aggregate_category(tag: EventTag | str) -> Category:
    if isinstance(tag, str):
        tag = lookup(tag)
    return tag.category


def tags_in(category: Category) -> list[EventTag]:
    return [t for t in TAGS if t.category is category]


def tags_of_kind(kind: EventKind) -> list[EventTag]:
    return [t for t in TAGS if t.kind is kind]


# --- external datasets --------------------------------------------------------

DATASETS = {
    "nonverbaltts": "NonverbalTTS",
    "nvspeech170k": "NVSpeech-170k",
    "nonverbalspeech38k": "NonVerbalSpeech-38K",
    "smiipnv": "SMIIP-NV",
    "synparaspeech": "Synparaspeech",
    "mnv17": "MNV-17",
}

EXCLUDE = "EXCLUDE"


def dataset_id(name: str) -> str:
    """Resolve a dataset display name (``"NVSpeech-170k"``) or id (``"nvspeech170k"``)."""
    key = re.sub(r"[^a-z0-9]", "", name.lower())
    if key not in DATASETS:
        raise UnknownDataset(f"unknown dataset: {name!r} (known: {', '.join(DATASETS)})")
    return key


def _raw_key(raw: str) -> str:
    return " ".join(raw.strip().strip(_DELIMS).split()).casefold()


class ExternalMapping:
    """Raw external tag to WESR tag tables, one per source dataset.

    Entries map to a canonical tag name or to ``None`` (outside the taxonomy).
    """

    def __init__(self, table: Mapping[str, Mapping[str, str | None]]):
        self._table: dict[str, dict[str, EventTag | None]] = {}
        for ds, entries in table.items():
            ds = dataset_id(ds)
            rows = self._table.setdefault(ds, {})
            for raw, target in entries.items():
                rows[_raw_key(raw)] = None if target in (None, EXCLUDE) else lookup(target)

    @classmethod
    def default(cls) -> ExternalMapping:
        text = resources.files("wesr.data").joinpath("external_tags.json").read_text("utf-8")
        return cls.from_flat(json.loads(text))

    @classmethod
    def from_flat(cls, flat: Mapping[str, str]) -> ExternalMapping:
        return cls(_unflatten(flat))

    def with_overrides(self, flat: Mapping[str, str]) -> ExternalMapping:
        merged = {ds: dict(rows) for ds, rows in self._table.items()}
        for ds, entries in _unflatten(flat).items():
            rows = merged.setdefault(dataset_id(ds), {})
            for raw, target in entries.items():
                rows[_raw_key(raw)] = None if target in (None, EXCLUDE) else lookup(target)
        out = ExternalMapping({})
        out._table = merged
        return out

    def inventory(self, dataset: str) -> list[str]:
        return sorted(self._table.get(dataset_id(dataset), {}))

    def map(self, dataset: str, raw: str) -> EventTag | None:
        ds = dataset_id(dataset)
        rows = self._table.get(ds, {})
        key = _raw_key(raw)
        if key not in rows:
            raise UnknownExternalTag(f"{raw!r} is not a {DATASETS[ds]} tag")
        return rows[key]


def _unflatten(flat: Mapping[str, str]) -> dict[str, dict[str, str]]:
    out: dict[str, dict[str, str]] = {}
    for key, target in flat.items():
        ds, sep, raw = key.partition("/")
        if not sep or not raw.strip():
            raise TaxonomyError(f"mapping key must look like 'dataset/raw_tag': {key!r}")
        if target != EXCLUDE and not is_known(target):
            raise UnknownTag(f"mapping {key!r} targets unknown tag {target!r}")
        out.setdefault(ds, {})[raw] = target
    return out


def load_mapping_overrides(path: str | Path) -> dict[str, str]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in data.items()
    ):
        raise TaxonomyError(f"{path}: expected a JSON object of string -> string")
    return data


_default_mapping: ExternalMapping | None = None


def default_mapping() -> ExternalMapping:
    global _default_mapping
    if _default_mapping is None:
        _default_mapping = ExternalMapping.default()
    return _default_mapping


def map_external(dataset: str, raw: str, mapping: ExternalMapping | None = None) -> EventTag | None:
    """Map a tag from a prior dataset onto the WESR taxonomy.

    Returns ``None`` when the tag has no WESR counterpart; utterances carrying
    such tags should be dropped.
    """
    return (mapping or default_mapping()).map(dataset, raw)
