"""Frequency-ranked spelling correction over edit distance <= 2 candidates."""

from __future__ import annotations

import string
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping

DEFAULT_ALPHABET = string.ascii_lowercase
SENTINELS = frozenset({"URL", "USER"})


@dataclass(frozen=True)
class FrequencyLexicon:
    counts: Mapping[str, int]
    total: int = field(init=False)

    def __post_init__(self):
        bad = [w for w, n in self.counts.items() if n <= 0]
        if bad:
            raise ValueError(f"lexicon counts must be positive (offending word {bad[0]!r})")
        object.__setattr__(self, "total", sum(self.counts.values()))

    def __contains__(self, word: str) -> bool:
        return word in self.counts

    def __len__(self) -> int:
        return len(self.counts)

    @classmethod
    def from_tokens(cls, tokens: Iterable[str]) -> "FrequencyLexicon":
        return cls(dict(Counter(tokens)))


def load_lexicon(path) -> FrequencyLexicon:
    """Read ``word<TAB>count`` lines."""
    counts: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected word<TAB>count")
            try:
                counts[parts[0]] = counts.get(parts[0], 0) + int(parts[1])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: count {parts[1]!r} is not an integer") from None
    return FrequencyLexicon(counts)


def edits1(word: str, alphabet: str = DEFAULT_ALPHABET) -> set[str]:
    """All strings one delete, adjacent transpose, replace or insert away from ``word``."""
    splits = [(word[:i], word[i:]) for i in range(len(word) + 1)]
    deletes = [a + b[1:] for a, b in splits if b]
    transposes = [a + b[1] + b[0] + b[2:] for a, b in splits if len(b) > 1]
    replaces = [a + c + b[1:] for a, b in splits if b for c in alphabet]
    inserts = [a + c + b for a, b in splits for c in alphabet]
    return set(deletes + transposes + replaces + inserts)


def edits2(word: str, alphabet: str = DEFAULT_ALPHABET) -> set[str]:
    return {e2 for e1 in edits1(word, alphabet) for e2 in edits1(e1, alphabet)}


def _best(candidates: Iterable[str], lexicon: FrequencyLexicon) -> str | None:
    known = [w for w in candidates if w in lexicon.counts]
    if not known:
        return None
    # highest count, then lexicographically smallest
    return min(known, key=lambda w: (-lexicon.counts[w], w))


def correct(word: str, lexicon: FrequencyLexicon, alphabet: str = DEFAULT_ALPHABET,
            strategy: str = "tiered") -> str:
    """Most plausible known spelling of ``word``.

    ``tiered`` prefers the word itself, then distance-1 words, then distance-2
    words, using counts only within a tier. ``max_frequency`` takes the most
    frequent known word anywhere within distance 2.
    """
    if word in lexicon.counts:
        return word
    e1 = edits1(word, alphabet)
    if strategy == "tiered":
        best = _best(e1, lexicon)
        if best is None:
            best = _best({e2 for e in e1 for e2 in edits1(e, alphabet)}, lexicon)
    elif strategy == "max_frequency":
        best = _best(e1 | {e2 for e in e1 for e2 in edits1(e, alphabet)}, lexicon)
    else:
        raise ValueError(f"unknown correction strategy {strategy!r}")
    return word if best is None else best


class SpellCorrector:
    """Token-level corrector with a per-instance cache.

    Only alphabetic tokens of at least ``min_length`` characters are touched,
    and the URL/USER sentinels never are.
    """

    def __init__(self, lexicon: FrequencyLexicon, alphabet: str = DEFAULT_ALPHABET,
                 min_length: int = 3, strategy: str = "tiered"):
        self.lexicon = lexicon
        self.alphabet = alphabet
        self.min_length = min_length
        self.strategy = strategy
        self._cache: dict[str, str] = {}

    def applies_to(self, token: str) -> bool:
        return token not in SENTINELS and len(token) >= self.min_length and token.isalpha()

    def __call__(self, token: str) -> str:
        if not self.applies_to(token):
            return token
        if token not in self._cache:
            self._cache[token] = correct(token, self.lexicon, self.alphabet, self.strategy)
        return self._cache[token]
