"""Datasets, vocabularies, sequence encoding, splits and pretrained vectors.

The on-disk dataset is a UTF-8 TSV with columns ``id``, ``label``, ``text``.
A label of ``_`` marks an unlabeled row.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

PAD, OOV = 0, 1
PAD_TOKEN, OOV_TOKEN = "<pad>", "<oov>"
UNLABELED = "_"
DEFAULT_MAX_LEN = 25


class DataFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Example:
    id: str
    text: str
    label: str | None = None


@dataclass
class LabeledDataset:
    examples: list[Example] = field(default_factory=list)
    label_set: list[str] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for ex in self.examples:
            if not ex.id:
                raise DataFormatError("example id must be non-empty")
            if ex.id in seen:
                raise DataFormatError(f"duplicate id {ex.id!r}")
            seen.add(ex.id)
            if ex.label is not None and ex.label not in self.label_set:
                raise DataFormatError(f"label {ex.label!r} of example {ex.id!r} is not in the label set")

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)

    @property
    def is_labeled(self) -> bool:
        return all(ex.label is not None for ex in self.examples)

    def label_indices(self) -> np.ndarray:
        index = {name: i for i, name in enumerate(self.label_set)}
        return np.array([index[ex.label] for ex in self.examples], dtype=np.int64)

    def subset(self, positions: Iterable[int]) -> "LabeledDataset":
        return LabeledDataset([self.examples[i] for i in positions], list(self.label_set))


def load_tsv(path, has_header: bool = False, skip_empty: bool = False) -> LabeledDataset:
    examples: list[Example] = []
    labels: list[str] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8", newline="\n") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if has_header and lineno == 1:
                continue
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) != 3:
                raise DataFormatError(f"{path}:{lineno}: expected 3 tab-separated columns, found {len(cols)}")
            ex_id, label, text = cols
            if not ex_id:
                raise DataFormatError(f"{path}:{lineno}: empty id")
            if ex_id in seen:
                raise DataFormatError(f"{path}:{lineno}: duplicate id {ex_id!r}")
            if skip_empty and not text.strip():
                continue
            seen.add(ex_id)
            lab = None if label == UNLABELED else label
            if lab is not None and lab not in labels:
                labels.append(lab)
            examples.append(Example(ex_id, text, lab))
    return LabeledDataset(examples, labels)


def write_tsv(path, examples: Iterable[Example]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ex in examples:
            text = ex.text.replace("\t", " ").replace("\n", " ")
            fh.write(f"{ex.id}\t{UNLABELED if ex.label is None else ex.label}\t{text}\n")


def whitespace_tokens(text: str) -> list[str]:
    return text.split()


@dataclass
class Vocabulary:
    index_to_token: list[str]
    counts: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.index_to_token[:2] != [PAD_TOKEN, OOV_TOKEN]:
            raise ValueError("vocabulary must start with the PAD and OOV entries")
        self.token_to_index = {tok: i for i, tok in enumerate(self.index_to_token)}
        if len(self.token_to_index) != len(self.index_to_token):
            raise ValueError("vocabulary tokens must be unique")

    def __len__(self) -> int:
        return len(self.index_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_index

    def lookup(self, token: str) -> int:
        return self.token_to_index.get(token, OOV)


def build_vocabulary(dataset: LabeledDataset | Iterable[Example],
                     tokens_of: Callable[[str], Sequence[str]] = whitespace_tokens,
                     min_count: int = 1) -> Vocabulary:
    if min_count < 1:
        raise ValueError("min_count must be at least 1")
    counts = Counter()
    for ex in dataset:
        counts.update(tokens_of(ex.text))
    for reserved in (PAD_TOKEN, OOV_TOKEN):
        counts.pop(reserved, None)
    kept = sorted((tok for tok, n in counts.items() if n >= min_count), key=lambda t: (-counts[t], t))
    return Vocabulary([PAD_TOKEN, OOV_TOKEN, *kept], {t: counts[t] for t in kept})


@dataclass(frozen=True)
class EncodedExample:
    indices: tuple[int, ...]
    label_index: int | None = None


def encode(tokens: Sequence[str], vocab: Vocabulary, max_len: int = DEFAULT_MAX_LEN,
           label_index: int | None = None) -> EncodedExample:
    if max_len < 1:
        raise ValueError("max_len must be at least 1")
    ids = [vocab.lookup(t) for t in tokens[:max_len]]
    ids += [PAD] * (max_len - len(ids))
    return EncodedExample(tuple(ids), label_index)


def decode(encoded: EncodedExample, vocab: Vocabulary) -> list[str]:
    """Inverse of :func:`encode` up to truncation; PAD positions are dropped."""
    return [vocab.index_to_token[i] for i in encoded.indices if i != PAD]


def encode_dataset(dataset: LabeledDataset, vocab: Vocabulary, tokens_of=whitespace_tokens,
                   max_len: int = DEFAULT_MAX_LEN) -> tuple[np.ndarray, np.ndarray | None]:
    """Index matrix ``(N, max_len)`` plus label indices (``None`` if any row is unlabeled)."""
    x = np.array([encode(tokens_of(ex.text), vocab, max_len).indices for ex in dataset],
                 dtype=np.int64).reshape(len(dataset), max_len)
    y = dataset.label_indices() if dataset.is_labeled else None
    return x, y


def split(dataset: LabeledDataset, train_fraction: float = 0.9,
          seed: int = 0) -> tuple[LabeledDataset, LabeledDataset]:
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    if len(dataset) == 0:
        raise ValueError("cannot split an empty dataset")
    order = np.random.default_rng(seed).permutation(len(dataset))
    n_train = int(np.floor(train_fraction * len(dataset)))
    return dataset.subset(order[:n_train].tolist()), dataset.subset(order[n_train:].tolist())


@dataclass
class EmbeddingTable:
    dim: int
    vectors: np.ndarray  # (len(vocab), dim)


def load_embeddings(path, vocab: Vocabulary, dim: int, seed: int = 0) -> EmbeddingTable:
    """Read ``word v1 ... vd`` lines (an optional ``count dim`` header is skipped).

    Vocabulary words missing from the file get uniform values in
    [-0.25, 0.25]; the PAD row is zero.
    """
    rng = np.random.default_rng(seed)
    vectors = rng.uniform(-0.25, 0.25, size=(len(vocab), dim))
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip().split(" ")
            if not parts or not parts[0]:
                continue
            if lineno == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
                continue
            word, values = parts[0], parts[1:]
            if len(values) != dim:
                raise DataFormatError(f"{path}:{lineno}: vector for {word!r} has {len(values)} values, expected {dim}")
            if word in vocab:
                vectors[vocab.lookup(word)] = np.array(values, dtype=np.float64)
    vectors[PAD] = 0.0
    return EmbeddingTable(dim, vectors)
