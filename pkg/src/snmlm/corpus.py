"""Vocabulary construction and sentence tokenization.

Reserved ids are fixed: 0 is the sentence-begin marker, 1 the sentence-end
marker and 2 the unknown word.  The remaining words are ordered by
descending count, ties broken lexicographically, so two runs over the same
text always produce the same ids.
"""

from __future__ import annotations

import gzip
import os
from collections import Counter
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError, InputError, UndefinedRateError

BOS = "<S>"
EOS = "</S>"
UNK = "<UNK>"
BOS_ID, EOS_ID, UNK_ID = 0, 1, 2
RESERVED = (BOS, EOS, UNK)


@dataclass(frozen=True)
class Vocabulary:
    """Immutable word <-> id map with the three reserved tokens first."""

    words: tuple[str, ...]
    counts: tuple[int, ...]
    min_count: int = 1
    _index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.words[:3] != RESERVED:
            raise ConfigError("reserved tokens must occupy ids 0, 1, 2")
        if len(self.words) != len(self.counts):
            raise ConfigError("words and counts differ in length")
        index = {w: i for i, w in enumerate(self.words)}
        if len(index) != len(self.words):
            raise ConfigError("duplicate word in vocabulary")
        object.__setattr__(self, "_index", index)

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self._index

    def id(self, word: str) -> int:
        """Id of `word`, or the unknown id for out-of-vocabulary words."""
        return self._index.get(word, UNK_ID)

    def word(self, idx: int) -> str:
        return self.words[idx]

    @property
    def bos(self) -> int:
        return BOS_ID

    @property
    def eos(self) -> int:
        return EOS_ID

    @property
    def unk(self) -> int:
        return UNK_ID


@dataclass(frozen=True)
class Sentence:
    """Token ids of one sentence, framed by the boundary markers.

    `words` holds the vocabulary spelling of each id (out-of-vocabulary
    words already replaced by the unknown token); feature keys are built
    from it.
    """

    ids: tuple[int, ...]
    words: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def n_predictions(self) -> int:
        return len(self.ids) - 1


def _open_lines(source) -> Iterator[str]:
    if isinstance(source, (str, os.PathLike)):
        path = Path(source)
        try:
            opener = gzip.open if path.suffix == ".gz" else open
            with opener(path, "rt", encoding="utf-8") as fh:
                yield from fh
        except (OSError, UnicodeDecodeError) as exc:
            raise InputError(f"cannot read corpus {path}: {exc}") from exc
    else:
        for line in source:
            if isinstance(line, bytes):
                try:
                    line = line.decode("utf-8")
                except UnicodeDecodeError as exc:
                    raise InputError(f"corpus line is not UTF-8: {exc}") from exc
            elif not isinstance(line, str):
                raise InputError(f"corpus lines must be text, got {type(line).__name__}")
            yield line


def read_corpus(source) -> list[str]:
    """Non-blank lines of a corpus file (plain or .gz) or line iterable."""
    return [line.rstrip("\n") for line in _open_lines(source) if line.strip()]


def count_words(lines: Iterable[str]) -> tuple[Counter, int]:
    """Word counts and sentence count of a stream shard.

    Shard results combine with :func:`merge_word_counts`.
    """
    counts: Counter = Counter()
    n = 0
    for line in _open_lines(lines):
        counts.update(line.split())
        n += 1
    return counts, n


def merge_word_counts(*shards: tuple[Counter, int]) -> tuple[Counter, int]:
    total: Counter = Counter()
    n = 0
    for counts, sentences in shards:
        total.update(counts)
        n += sentences
    return total, n


def vocabulary_from_counts(counts: Counter, n_sentences: int, min_count: int) -> Vocabulary:
    if not isinstance(min_count, int) or min_count < 1:
        raise ConfigError(f"min_count must be a positive integer, got {min_count!r}")
    kept = []
    unk_count = counts.get(UNK, 0)
    for word, c in counts.items():
        if word in RESERVED:
            continue
        if c >= min_count:
            kept.append((word, c))
        else:
            unk_count += c
    kept.sort(key=lambda wc: (-wc[1], wc[0]))
    words = RESERVED + tuple(w for w, _ in kept)
    freqs = (n_sentences, n_sentences, unk_count) + tuple(c for _, c in kept)
    return Vocabulary(words, freqs, min_count)


def build_vocabulary(text_stream, min_count: int = 3) -> Vocabulary:
    """Vocabulary of all words seen at least `min_count` times.

    `text_stream` is an iterable of whitespace-tokenized lines, or a path.
    """
    if not isinstance(min_count, int) or min_count < 1:
        raise ConfigError(f"min_count must be a positive integer, got {min_count!r}")
    counts, n = count_words(text_stream)
    return vocabulary_from_counts(counts, n, min_count)


def tokenize(line: str, vocab: Vocabulary) -> Sentence:
    ids = [BOS_ID]
    words = [BOS]
    for w in line.split():
        i = vocab.id(w)
        ids.append(i)
        words.append(vocab.words[i])
    ids.append(EOS_ID)
    words.append(EOS)
    return Sentence(tuple(ids), tuple(words))


def detokenize(sentence: Sentence) -> list[str]:
    return list(sentence.words[1:-1])


def oov_rate(sentences: Iterable[Sentence]) -> float:
    """Fraction of predicted tokens that are the unknown word.

    The sentence-begin marker is never predicted and is not counted.
    """
    unknown = predicted = 0
    for s in sentences:
        predicted += len(s.ids) - 1
        unknown += sum(1 for i in s.ids[1:] if i == UNK_ID)
    if predicted == 0:
        raise UndefinedRateError("no predicted tokens")
    return unknown / predicted


def write_vocabulary(vocab: Vocabulary, path) -> None:
    Path(path).write_text(vocabulary_to_text(vocab), encoding="utf-8")


def vocabulary_to_text(vocab: Vocabulary) -> str:
    lines = [f"# min_count={vocab.min_count}"]
    lines += [f"{w}\t{c}" for w, c in zip(vocab.words, vocab.counts)]
    return "\n".join(lines) + "\n"


def vocabulary_from_text(text: str) -> Vocabulary:
    words, counts = [], []
    min_count = 1
    for n, line in enumerate(text.splitlines(), 1):
        if not line:
            continue
        if "\t" not in line:
            if line.startswith("# min_count="):
                min_count = int(line.split("=", 1)[1])
                continue
            raise InputError(f"vocabulary line {n}: expected word<TAB>count")
        w, c = line.rsplit("\t", 1)
        try:
            counts.append(int(c))
        except ValueError:
            raise InputError(f"vocabulary line {n}: bad count {c!r}") from None
        words.append(w)
    try:
        return Vocabulary(tuple(words), tuple(counts), min_count)
    except ConfigError as exc:
        raise InputError(f"malformed vocabulary: {exc}") from exc


def read_vocabulary(path) -> Vocabulary:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise InputError(f"cannot read vocabulary {path}: {exc}") from exc
    return vocabulary_from_text(text)


def tokenize_corpus(lines: Sequence[str], vocab: Vocabulary) -> list[Sentence]:
    return [tokenize(line, vocab) for line in lines]
