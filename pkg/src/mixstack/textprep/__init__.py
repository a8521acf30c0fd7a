"""Tweet normalization: emoji, URLs/handles/hashtags, abbreviations, elongation,
punctuation, stopwords and stemming, composed as an ordered pipeline."""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass, field
from importlib import resources as _res
from typing import Callable, Sequence

from ..spellcheck import DEFAULT_ALPHABET, FrequencyLexicon, SpellCorrector
from . import porter

SENTINELS = frozenset({"URL", "USER"})


class PipelineError(ValueError):
    pass


# ------------------------------------------------------------------ resources

@dataclass(frozen=True)
class ResourceTable:
    name: str
    entries: dict[str, str]
    case_sensitive: bool = False

    def __post_init__(self):
        if not self.case_sensitive:
            folded = {}
            for k, v in self.entries.items():
                key = k.lower()
                if key in folded and folded[key] != v:
                    raise PipelineError(f"{self.name}: key {k!r} clashes with another entry when lowercased")
                folded[key] = v
            object.__setattr__(self, "entries", folded)

    def get(self, key: str) -> str | None:
        return self.entries.get(key if self.case_sensitive else key.lower())


@dataclass(frozen=True)
class StopList:
    words: frozenset[str]

    def __post_init__(self):
        if any(w != w.lower() for w in self.words):
            raise PipelineError("stop words must be lowercase")


def read_table(path, name: str, case_sensitive: bool = False) -> ResourceTable:
    entries: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise PipelineError(f"{path}:{lineno}: expected key<TAB>replacement")
            if parts[0] in entries:
                raise PipelineError(f"{path}:{lineno}: duplicate key {parts[0]!r}")
            entries[parts[0]] = parts[1]
    return ResourceTable(name, entries, case_sensitive)


def read_stoplist(path) -> StopList:
    with open(path, encoding="utf-8") as fh:
        return StopList(frozenset(w.strip().lower() for w in fh if w.strip()))


def _shipped(filename: str):
    return _res.files("mixstack.resources").joinpath(filename)


def default_emoji() -> ResourceTable:
    with _res.as_file(_shipped("emoji.tsv")) as p:
        return read_table(p, "emoji", case_sensitive=True)


def default_contractions() -> ResourceTable:
    with _res.as_file(_shipped("contractions.tsv")) as p:
        return read_table(p, "contractions")


def default_acronyms() -> ResourceTable:
    with _res.as_file(_shipped("acronyms.tsv")) as p:
        return read_table(p, "acronyms")


def default_stopwords() -> StopList:
    with _res.as_file(_shipped("stopwords_en.txt")) as p:
        return read_stoplist(p)


# ----------------------------------------------------------------- operations

_EMOJI_RANGES = (
    (0x1F000, 0x1FAFF), (0x2600, 0x27BF), (0x2300, 0x23FF), (0x2B00, 0x2BFF),
    (0xFE00, 0xFE0F), (0x200D, 0x200D), (0xE0020, 0xE007F), (0x3030, 0x3030), (0x303D, 0x303D),
)


def is_emoji_char(ch: str) -> bool:
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _EMOJI_RANGES)


def demojize(text: str, emoji: ResourceTable, keep_unknown: bool = False) -> str:
    """Replace known emoji (longest sequence first) by their names; drop unknown ones."""
    if not any(is_emoji_char(ch) for ch in text):
        return text
    longest = max((len(k) for k in emoji.entries), default=1)
    out: list[str] = []
    i = 0
    while i < len(text):
        for size in range(min(longest, len(text) - i), 0, -1):
            name = emoji.entries.get(text[i:i + size])
            if name is not None:
                out.append(f" {name} ")
                i += size
                break
        else:
            ch = text[i]
            if not is_emoji_char(ch):
                out.append(ch)
            elif keep_unknown:
                out.append(f" {ch} ")
            i += 1
    return " ".join("".join(out).split())


_URL = re.compile(r"\S*(?:https?:|www\.)\S*", re.IGNORECASE)
_HTTP = re.compile(r"\S*http\S*", re.IGNORECASE)
_HANDLE = re.compile(r"@\w+")
_STRAY_AT = re.compile(r"(?<!\S)@+")
_HASHTAG = re.compile(r"#+(?=\w)")


def replace_patterns(text: str) -> str:
    """URLs -> ``URL``, ``@handles`` -> ``USER``, hashtags lose their ``#``."""
    text = _URL.sub("URL", text)
    text = _HTTP.sub("URL", text)
    text = _HASHTAG.sub("", text)
    text = _HANDLE.sub("USER", text)
    return _STRAY_AT.sub("", text)


_EDGE_PUNCT = re.compile(r"^([^\w']*)(.*?)([^\w']*)$", re.DOTALL)


def _expand_token(token: str, tables: Sequence[ResourceTable]) -> str:
    lead, core, trail = _EDGE_PUNCT.match(token).groups()
    if not core:
        return token
    for table in tables:
        value = table.get(core.replace("\u2019", "'"))
        if value is not None:
            return lead + value + trail
    return token


def expand_abbreviations(text: str, contractions: ResourceTable, acronyms: ResourceTable) -> str:
    """Whole-token, case-insensitive expansion; contractions are consulted before acronyms."""
    tables = (contractions, acronyms)
    return " ".join(_expand_token(tok, tables) for tok in text.split())


def collapse_elongation(text: str, max_repeat: int = 2) -> str:
    if max_repeat < 1:
        raise PipelineError("max_repeat must be at least 1")
    return re.sub(r"(.)\1{%d,}" % max_repeat, lambda m: m.group(1) * max_repeat, text, flags=re.DOTALL)


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P") and ch != "_"


def remove_punctuation(text: str) -> str:
    """Drop punctuation and collapse whitespace.

    Apostrophes vanish in place (``y'know`` -> ``yknow``); every other mark
    becomes a space so hyphenated words split. Underscores survive because
    emoji names use them.
    """
    chars = []
    for ch in text:
        if ch in "'’":
            continue
        chars.append(" " if _is_punct(ch) else ch)
    return " ".join("".join(chars).split())


def lowercase(tokens: Sequence[str]) -> list[str]:
    return [t if t in SENTINELS else t.lower() for t in tokens]


def remove_stopwords(tokens: Sequence[str], stops: StopList) -> list[str]:
    return [t for t in tokens if t not in stops.words]


def stem_english(token: str) -> str:
    return porter.stem(token)


STEMMERS: dict[str, Callable[[str], str]] = {"none": lambda t: t, "english": stem_english}
UNSHIPPED_STEMMERS = frozenset({"spanish", "greek", "turkish"})


def register_stemmer(name: str, fn: Callable[[str], str]) -> None:
    STEMMERS[name] = fn


def get_stemmer(name: str) -> Callable[[str], str]:
    if name in STEMMERS:
        return STEMMERS[name]
    if name in UNSHIPPED_STEMMERS:
        raise PipelineError(f"stemmer {name!r} is a plug-in slot with no bundled implementation; "
                            "register one with register_stemmer")
    raise PipelineError(f"unknown stemmer {name!r}")


# ------------------------------------------------------------------- pipeline

TEXT_STEPS = ("demojize", "replace_patterns", "expand_abbreviations", "collapse_elongation",
              "remove_punctuation")
TOKEN_STEPS = ("lowercase", "tokenize", "spell_correct", "remove_stopwords", "stem")
STEPS = TEXT_STEPS + TOKEN_STEPS
DEFAULT_STEPS = ("demojize", "replace_patterns", "expand_abbreviations", "collapse_elongation",
                 "remove_punctuation", "lowercase", "tokenize")


@dataclass
class PipelineConfig:
    steps: list[str] = field(default_factory=lambda: list(DEFAULT_STEPS))
    emoji: ResourceTable | None = None
    contractions: ResourceTable | None = None
    acronyms: ResourceTable | None = None
    stopwords: StopList | None = None
    lexicon: FrequencyLexicon | None = None
    max_repeat: int = 2
    stemmer: str = "none"
    keep_unknown_emoji: bool = False
    alphabet: str = DEFAULT_ALPHABET
    spell_min_length: int = 3
    spell_strategy: str = "tiered"

    def __post_init__(self):
        unknown = [s for s in self.steps if s not in STEPS]
        if unknown:
            raise PipelineError(f"unknown pipeline step(s): {', '.join(unknown)}")
        if self.max_repeat < 1:
            raise PipelineError("max_repeat must be at least 1")
        if "spell_correct" in self.steps and self.lexicon is None:
            raise PipelineError("spell_correct needs a frequency lexicon")
        get_stemmer(self.stemmer)

    @classmethod
    def default(cls, spell: FrequencyLexicon | None = None, stopwords: bool = False,
                stemmer: str = "none", **kwargs) -> "PipelineConfig":
        """Shipped tables plus the optional tail steps that were asked for."""
        steps = list(DEFAULT_STEPS)
        if spell is not None:
            steps.append("spell_correct")
        if stopwords:
            steps.append("remove_stopwords")
        if stemmer != "none":
            steps.append("stem")
        return cls(steps=steps, emoji=default_emoji(), contractions=default_contractions(),
                   acronyms=default_acronyms(), stopwords=default_stopwords() if stopwords else None,
                   lexicon=spell, stemmer=stemmer, **kwargs)

    def to_dict(self) -> dict:
        """JSON-ready snapshot, resource contents included."""
        return {
            "steps": list(self.steps),
            "emoji": None if self.emoji is None else self.emoji.entries,
            "contractions": None if self.contractions is None else self.contractions.entries,
            "acronyms": None if self.acronyms is None else self.acronyms.entries,
            "stopwords": None if self.stopwords is None else sorted(self.stopwords.words),
            "lexicon": None if self.lexicon is None else dict(sorted(self.lexicon.counts.items())),
            "max_repeat": self.max_repeat,
            "stemmer": self.stemmer,
            "keep_unknown_emoji": self.keep_unknown_emoji,
            "alphabet": self.alphabet,
            "spell_min_length": self.spell_min_length,
            "spell_strategy": self.spell_strategy,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        for name in ("emoji", "contractions", "acronyms"):
            if d.get(name) is not None:
                d[name] = ResourceTable(name, d[name], case_sensitive=(name == "emoji"))
        if d.get("stopwords") is not None:
            d["stopwords"] = StopList(frozenset(d["stopwords"]))
        if d.get("lexicon") is not None:
            d["lexicon"] = FrequencyLexicon(d["lexicon"])
        return cls(**d)


_EMPTY = ResourceTable("empty", {})


class Pipeline:
    """A compiled :class:`PipelineConfig`: call it on a string to get tokens."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        c = config
        corrector = (SpellCorrector(c.lexicon, c.alphabet, c.spell_min_length, c.spell_strategy)
                     if c.lexicon is not None else None)
        stemmer = get_stemmer(c.stemmer)
        stops = c.stopwords or StopList(frozenset())
        self._fns = {
            "demojize": lambda s: demojize(s, c.emoji or _EMPTY, c.keep_unknown_emoji),
            "replace_patterns": replace_patterns,
            "expand_abbreviations": lambda s: expand_abbreviations(
                s, c.contractions or _EMPTY, c.acronyms or _EMPTY),
            "collapse_elongation": lambda s: collapse_elongation(s, c.max_repeat),
            "remove_punctuation": remove_punctuation,
            "lowercase": lowercase,
            "tokenize": list,
            "spell_correct": lambda toks: [corrector(t) for t in toks],
            "remove_stopwords": lambda toks: remove_stopwords(toks, stops),
            "stem": lambda toks: [stemmer(t) for t in toks],
        }

    def __call__(self, text: str) -> list[str]:
        state: str | list[str] = unicodedata.normalize("NFC", text)
        for step in self.config.steps:
            if step in TEXT_STEPS:
                if isinstance(state, list):
                    state = " ".join(state)
                state = self._fns[step](state)
            else:
                if isinstance(state, str):
                    state = state.split()
                state = self._fns[step](state)
        return state.split() if isinstance(state, str) else list(state)


def run_pipeline(text: str, config: PipelineConfig) -> list[str]:
    return Pipeline(config)(text)
