"""Datasets, bilingual lexicons, tokenization and the synthetic benchmark.

Everything here is immutable once built, so datasets and lexicons can be
shared freely between attack workers.
"""

from __future__ import annotations

import os
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, EmptyText, ParseError

SPLITS = ("train", "valid", "test")
HEADER = "text\tlabel"


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[str, ...]
    raw: str

    def __post_init__(self):
        if not self.tokens:
            raise EmptyText("sentence has no tokens")
        for tok in self.tokens:
            if not tok or any(ch.isspace() for ch in tok):
                raise ValueError(f"invalid token {tok!r}")

    def __len__(self):
        return len(self.tokens)

    def text(self) -> str:
        return detokenize(self.tokens)

    def replace(self, position: int, word: str) -> "Sentence":
        tokens = list(self.tokens)
        tokens[position] = word
        return Sentence(tuple(tokens), detokenize(tokens))


@dataclass(frozen=True)
class LabeledExample:
    sentence: Sentence
    label: str


@dataclass(frozen=True)
class Dataset:
    name: str
    labels: tuple[str, ...]
    splits: Mapping[str, tuple[LabeledExample, ...]] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.labels) < 2:
            raise ConfigError(f"dataset {self.name!r} needs at least 2 labels, got {len(self.labels)}")
        if len(set(self.labels)) != len(self.labels):
            raise ConfigError(f"duplicate labels in {self.labels!r}")
        known = set(self.labels)
        for split, examples in self.splits.items():
            for ex in examples:
                if ex.label not in known:
                    raise ConfigError(f"label {ex.label!r} in split {split!r} is not in {self.labels!r}")

    @property
    def train(self) -> tuple[LabeledExample, ...]:
        return self.splits.get("train", ())

    @property
    def valid(self) -> tuple[LabeledExample, ...]:
        return self.splits.get("valid", ())

    @property
    def test(self) -> tuple[LabeledExample, ...]:
        return self.splits.get("test", ())

    def with_splits(self, name: str | None = None, **splits) -> "Dataset":
        merged = dict(self.splits)
        merged.update({k: tuple(v) for k, v in splits.items()})
        return Dataset(name or self.name, self.labels, merged)


@dataclass(frozen=True)
class SplitStats:
    counts: dict[str, int]
    n_classes: int
    label_frequency: dict[str, dict[str, int]]


class Lexicon:
    """Word translation table from a source language into one target language.

    Candidates are kept in preference order; ``lookup`` never raises for
    unknown words.
    """

    def __init__(self, source_language: str, target_language: str,
                 entries: Mapping[str, Sequence[str]] | None = None):
        self.source_language = source_language
        self.target_language = target_language
        self._entries: dict[str, tuple[str, ...]] = {}
        for word, candidates in (entries or {}).items():
            key = word.lower()
            cands = tuple(dict.fromkeys(c.lower() for c in candidates))
            if not key or not cands:
                raise ValueError(f"empty lexicon entry for {word!r}")
            for c in cands:
                if not c or any(ch.isspace() for ch in c):
                    raise ValueError(f"lexicon candidate {c!r} for {word!r} is not a single token")
            self._entries[key] = cands

    @property
    def entries(self) -> dict[str, tuple[str, ...]]:
        return dict(self._entries)

    def lookup(self, word: str) -> tuple[str, ...]:
        return self._entries.get(word.lower(), ())

    def __contains__(self, word: str) -> bool:
        return word.lower() in self._entries

    def __len__(self):
        return len(self._entries)

    def __eq__(self, other):
        if not isinstance(other, Lexicon):
            return NotImplemented
        return (self.source_language, self.target_language, self._entries) == (
            other.source_language, other.target_language, other._entries)

    def __repr__(self):
        return (f"Lexicon({self.source_language!r}->{self.target_language!r}, "
                f"{len(self._entries)} entries)")


def tokenize(text: str) -> Sentence:
    tokens = tuple(text.lower().split())
    if not tokens:
        raise EmptyText("text is empty or whitespace-only")
    return Sentence(tokens, text)


def detokenize(tokens: Iterable[str]) -> str:
    return " ".join(tokens)


def _read_lines(path: Path) -> list[str]:
    try:
        data = path.read_bytes()
    except FileNotFoundError:
        raise ParseError("file not found", path) from None
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"not valid UTF-8 ({exc})", path) from None
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return [line[:-1] if line.endswith("\r") else line for line in lines]


def load_split(path, allow_empty: bool = False) -> list[LabeledExample]:
    """Read one ``text<TAB>label`` file."""
    path = Path(path)
    lines = _read_lines(path)
    if not lines or lines[0] != HEADER:
        raise ParseError("missing header 'text<TAB>label'", path, 1)
    examples = []
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split("\t")
        if len(fields) != 2:
            raise ParseError(f"expected 2 tab-separated fields, got {len(fields)}", path, lineno)
        text, label = fields
        if not text.strip():
            raise ParseError("empty text field", path, lineno)
        if not label:
            raise ParseError("empty label field", path, lineno)
        examples.append(LabeledExample(tokenize(text), label))
    if not examples and not allow_empty:
        raise ParseError("empty split (header only)", path)
    return examples


def load_dataset(path, name: str | None = None) -> Dataset:
    """Load a dataset directory holding ``train.tsv`` and optional ``valid.tsv``/``test.tsv``.

    Labels come from ``labels.txt`` when present, otherwise in order of first
    appearance across train, valid, test. A single ``.tsv`` file is loaded as
    the train split.
    """
    path = Path(path)
    if path.is_file():
        splits = {"train": tuple(load_split(path))}
        label_file = None
        name = name or path.stem
    elif path.is_dir():
        splits = {}
        train_path = path / "train.tsv"
        if not train_path.exists():
            raise ParseError("missing train.tsv", path)
        splits["train"] = tuple(load_split(train_path))
        for split in ("valid", "test"):
            p = path / f"{split}.tsv"
            splits[split] = tuple(load_split(p, allow_empty=True)) if p.exists() else ()
        label_file = path / "labels.txt"
        name = name or path.name
    else:
        raise ParseError("no such file or directory", path)

    if label_file is not None and label_file.exists():
        labels = tuple(line for line in _read_lines(label_file) if line)
        known = set(labels)
        for split, examples in splits.items():
            for i, ex in enumerate(examples):
                if ex.label not in known:
                    raise ParseError(f"label {ex.label!r} not declared in labels.txt",
                                     path / f"{split}.tsv", i + 2)
    else:
        labels = tuple(dict.fromkeys(ex.label for split in SPLITS for ex in splits.get(split, ())))
    if len(labels) < 2:
        raise ParseError(f"need at least 2 labels, found {list(labels)}", path)
    return Dataset(name, labels, splits)


def split_to_tsv(examples: Iterable[LabeledExample]) -> str:
    lines = [HEADER]
    for ex in examples:
        text = ex.sentence.raw
        if "\t" in text or "\n" in text or "\r" in text:
            text = ex.sentence.text()
        lines.append(f"{text}\t{ex.label}")
    return "\n".join(lines) + "\n"


def write_split(path, examples: Iterable[LabeledExample]) -> None:
    Path(path).write_text(split_to_tsv(examples), encoding="utf-8", newline="\n")


def write_dataset(dataset: Dataset, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for split in SPLITS:
        write_split(directory / f"{split}.tsv", dataset.splits.get(split, ()))
    (directory / "labels.txt").write_text("\n".join(dataset.labels) + "\n", encoding="utf-8", newline="\n")


def load_lexicon(path, source_lang: str, target_lang: str) -> Lexicon:
    """Read ``source<TAB>target<TAB>rank`` rows into a Lexicon."""
    path = Path(path)
    ranked: dict[str, list[tuple[int, int, str]]] = {}
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise ParseError(f"expected 3 tab-separated fields, got {len(fields)}", path, lineno)
        source, target, rank_text = (f.strip() for f in fields)
        if not source or not target:
            raise ParseError("empty word field", path, lineno)
        if any(ch.isspace() for ch in source) or any(ch.isspace() for ch in target):
            raise ParseError("multi-token entries are not supported", path, lineno)
        try:
            rank = int(rank_text)
        except ValueError:
            raise ParseError(f"rank {rank_text!r} is not an integer", path, lineno) from None
        if rank < 1:
            raise ParseError(f"rank must be positive, got {rank}", path, lineno)
        ranked.setdefault(source.lower(), []).append((rank, lineno, target.lower()))

    entries = {}
    for source, rows in ranked.items():
        # stable: equal ranks keep file order; duplicates keep their best rank
        entries[source] = list(dict.fromkeys(t for _, _, t in sorted(rows)))
    return Lexicon(source_lang, target_lang, entries)


def lexicon_to_tsv(lexicon: Lexicon) -> str:
    lines = []
    for source, candidates in lexicon.entries.items():
        for rank, target in enumerate(candidates, start=1):
            lines.append(f"{source}\t{target}\t{rank}\n")
    return "".join(lines)


def write_lexicon(lexicon: Lexicon, path) -> None:
    Path(path).write_text(lexicon_to_tsv(lexicon), encoding="utf-8", newline="\n")


def dataset_stats(dataset: Dataset) -> SplitStats:
    counts = {}
    freq = {}
    for split in SPLITS:
        examples = dataset.splits.get(split, ())
        counts[split] = len(examples)
        c = Counter(ex.label for ex in examples)
        freq[split] = {label: c.get(label, 0) for label in dataset.labels}
    return SplitStats(counts, len(dataset.labels), freq)


# ---------------------------------------------------------------------------
# synthetic benchmark

_CONSONANTS = "bcdghjklmnprstw"
_VOWELS = "aeiou"
_FOREIGN = "qxzvfy"


@dataclass(frozen=True)
class VocabSpec:
    """Shape of the synthetic vocabulary and sentences.

    ``vocab_size - filler_size`` words are split evenly between classes as
    indicator words; each sentence carries ``indicators_per_sentence`` of
    its class's indicators among shared filler words.
    """

    vocab_size: int = 90
    filler_size: int = 60
    sentence_length: tuple[int, int] = (8, 14)
    indicators_per_sentence: tuple[int, int] = (2, 3)
    target_language: str = "xx"
    source_language: str = "id"


def _seed_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(int(seed) % (1 << 64))


def _make_word(rng, alphabet_c, syllables) -> str:
    return "".join(alphabet_c[rng.integers(len(alphabet_c))] + _VOWELS[rng.integers(len(_VOWELS))]
                   for _ in range(syllables))


def pseudo_lexicon(words: Sequence[str], target_language: str, rng, avoid: set[str],
                   source_language: str = "id") -> Lexicon:
    """Two made-up translations per word, none of which occur in ``avoid``.

    ``avoid`` is extended with the generated forms.
    """
    if not isinstance(rng, np.random.Generator):
        rng = _seed_rng(rng)
    entries = {}
    for word in words:
        while True:
            foreign = _make_word(rng, _FOREIGN + _CONSONANTS[:4], max(2, len(word) // 2))
            if foreign not in avoid:
                break
        respelled = word[:-1] + ("e" if word[-1] != "e" else "o") + "h"
        avoid.update((foreign, respelled))
        entries[word] = [foreign, respelled]
    return Lexicon(source_language, target_language, entries)


def synth_benchmark(n_train: int, n_test: int, n_classes: int,
                    vocab_spec: VocabSpec | None = None, seed: int = 0,
                    n_valid: int | None = None) -> tuple[Dataset, Lexicon]:
    """Generate a linearly separable code-mixing benchmark and its lexicon.

    Each class owns a disjoint set of indicator words; the lexicon maps every
    indicator to two pseudo-L2 forms that never occur in the data (rank 1 a
    foreign-looking word, rank 2 a light respelling of the original).
    """
    spec = vocab_spec or VocabSpec()
    if n_classes < 2:
        raise ConfigError(f"n_classes must be >= 2, got {n_classes}")
    if n_train < 1 or n_test < 0:
        raise ConfigError("n_train must be >= 1 and n_test >= 0")
    lo_len, hi_len = spec.sentence_length
    lo_ind, hi_ind = spec.indicators_per_sentence
    if not (1 <= lo_ind <= hi_ind and hi_ind < lo_len <= hi_len):
        raise ConfigError("invalid sentence_length/indicators_per_sentence in VocabSpec")
    per_class = (spec.vocab_size - spec.filler_size) // n_classes
    if spec.filler_size < 1 or per_class < max(2, hi_ind):
        raise ConfigError(
            f"vocab_size={spec.vocab_size} with filler_size={spec.filler_size} leaves "
            f"{per_class} indicator words per class for {n_classes} classes")
    n_valid = max(1, n_test // 2) if n_valid is None else n_valid

    rng = _seed_rng(seed)
    words: list[str] = []
    seen: set[str] = set()
    n_words = spec.filler_size + per_class * n_classes
    while len(words) < n_words:
        w = _make_word(rng, _CONSONANTS, int(rng.integers(2, 4)))
        if w not in seen:
            seen.add(w)
            words.append(w)
    filler = words[:spec.filler_size]
    indicators = [words[spec.filler_size + c * per_class: spec.filler_size + (c + 1) * per_class]
                  for c in range(n_classes)]

    lexicon = pseudo_lexicon([w for group in indicators for w in group], spec.target_language,
                             rng, seen, spec.source_language)

    labels = tuple(f"label_{c}" for c in range(n_classes))

    def make(n):
        out = []
        for _ in range(n):
            c = int(rng.integers(n_classes))
            length = int(rng.integers(lo_len, hi_len + 1))
            k = int(rng.integers(lo_ind, hi_ind + 1))
            chosen = list(rng.choice(indicators[c], size=k, replace=False))
            chosen += [filler[i] for i in rng.integers(len(filler), size=length - k)]
            order = rng.permutation(length)
            tokens = tuple(chosen[i] for i in order)
            out.append(LabeledExample(Sentence(tokens, detokenize(tokens)), labels[c]))
        return tuple(out)

    splits = {"train": make(n_train), "valid": make(n_valid), "test": make(n_test)}
    return Dataset(f"synth-{n_classes}c-s{seed}", labels, splits), lexicon


def lexicon_path(directory, language: str) -> str:
    return os.path.join(directory, f"lexicon_{language}.tsv")
