"""Sparse feature-target count matrix.

A finished :class:`CountStore` is stored row-compressed: feature ids are
the ranks of the feature keys in sorted order, and every row lists its
targets in ascending id order with exact int64 counts.
"""

from __future__ import annotations

from array import array
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Sentence, Vocabulary
from .errors import ConfigError, InputError
from .features import EMPTY_KEY, Event, Template, context_keys, feature_type


@dataclass
class EventArrays:
    """Events encoded as feature ids, row-compressed.

    Features of event ``e`` are ``features[ptr[e]:ptr[e + 1]]`` in ascending
    id order, which is also canonical key order.
    """

    ptr: np.ndarray
    features: np.ndarray
    targets: np.ndarray

    def __len__(self) -> int:
        return len(self.targets)

    def event_features(self, e: int) -> np.ndarray:
        return self.features[self.ptr[e] : self.ptr[e + 1]]

    def subset(self, index) -> EventArrays:
        index = np.asarray(index, dtype=np.int64)
        lengths = np.diff(self.ptr)[index]
        ptr = np.zeros(len(index) + 1, dtype=np.int64)
        np.cumsum(lengths, out=ptr[1:])
        starts = self.ptr[index]
        feats = np.concatenate(
            [self.features[s : s + n] for s, n in zip(starts, lengths)]
        ) if len(index) else np.zeros(0, dtype=np.int64)
        return EventArrays(ptr, feats.astype(np.int64), self.targets[index].copy())


class CountStore:
    """Feature-target counts C_ij and feature totals C_i*."""

    def __init__(self, vocab: Vocabulary, keys: Sequence[str], indptr, targets, counts):
        self.vocab = vocab
        self.keys = list(keys)
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.targets = np.asarray(targets, dtype=np.int64)
        self.counts = np.asarray(counts, dtype=np.int64)
        self.totals = np.add.reduceat(self.counts, self.indptr[:-1]) if len(self.counts) else (
            np.zeros(len(self.keys), dtype=np.int64)
        )
        # reduceat misbehaves on empty rows; stored features always have a row
        if len(self.keys) and np.any(np.diff(self.indptr) == 0):
            raise InputError("every stored feature needs at least one target")
        self._index = {k: i for i, k in enumerate(self.keys)}
        self._types: list[str] | None = None

    # -- lookups ------------------------------------------------------------

    @property
    def n_features(self) -> int:
        return len(self.keys)

    @property
    def n_pairs(self) -> int:
        return len(self.counts)

    def __contains__(self, key: str) -> bool:
        return key in self._index

    def feature_id(self, key: str) -> int:
        try:
            return self._index[key]
        except KeyError:
            raise KeyError(f"unknown feature {key!r}") from None

    def get_id(self, key: str, default: int = -1) -> int:
        return self._index.get(key, default)

    @property
    def types(self) -> list[str]:
        if self._types is None:
            self._types = [feature_type(k) for k in self.keys]
        return self._types

    def _check(self, i: int) -> None:
        if not 0 <= i < len(self.keys):
            raise KeyError(f"unknown feature id {i}")

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        self._check(i)
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return self.targets[lo:hi], self.counts[lo:hi]

    def total(self, i: int) -> int:
        self._check(i)
        return int(self.totals[i])

    def pair_index(self, i: int, j: int) -> int:
        """Position of (i, j) in the pair arrays, -1 when C_ij = 0."""
        self._check(i)
        lo, hi = self.indptr[i], self.indptr[i + 1]
        k = lo + int(np.searchsorted(self.targets[lo:hi], j))
        if k < hi and self.targets[k] == j:
            return k
        return -1

    def count(self, i: int, j: int) -> int:
        k = self.pair_index(i, j)
        return 0 if k < 0 else int(self.counts[k])

    def triples(self):
        """(feature key, target word, count) in store order."""
        words = self.vocab.words
        for i, key in enumerate(self.keys):
            for k in range(self.indptr[i], self.indptr[i + 1]):
                yield key, words[self.targets[k]], int(self.counts[k])

    def pair_rows(self) -> np.ndarray:
        """Feature id of every stored pair."""
        return np.repeat(np.arange(self.n_features, dtype=np.int64), np.diff(self.indptr))

    def encode_events(self, events: Iterable[Event], strict: bool = True) -> EventArrays:
        """Map events onto feature ids.

        With ``strict`` an unknown feature is an error; otherwise unknown
        features are dropped and an event left with none backs off to the
        empty context.
        """
        ptr = array("q", [0])
        feats = array("q")
        targets = array("q")
        empty = self.get_id(EMPTY_KEY)
        for ev in events:
            ids = []
            for f in ev.features:
                key = f.key if hasattr(f, "key") else f
                i = self._index.get(key, -1)
                if i < 0:
                    if strict:
                        raise KeyError(f"unknown feature {key!r}")
                    continue
                ids.append(i)
            if not ids and empty >= 0:
                ids = [empty]
            ids.sort()
            feats.extend(ids)
            ptr.append(len(feats))
            targets.append(ev.target)
        return EventArrays(
            np.frombuffer(ptr, dtype=np.int64).copy(),
            np.frombuffer(feats, dtype=np.int64).copy(),
            np.frombuffer(targets, dtype=np.int64).copy(),
        )

    def encode_sentences(self, sentences: Iterable[Sentence], templates: Sequence[Template]) -> EventArrays:
        """Held-out encoding straight from sentences (unknown features dropped)."""
        index = self._index
        empty = index.get(EMPTY_KEY, -1)
        ptr = array("q", [0])
        feats = array("q")
        targets = array("q")
        for s in sentences:
            for pos in range(1, len(s.ids)):
                ids = [i for i in (index.get(k, -1) for k in context_keys(s.words, pos, templates)) if i >= 0]
                if not ids and empty >= 0:
                    ids = [empty]
                ids.sort()
                feats.extend(ids)
                ptr.append(len(feats))
                targets.append(s.ids[pos])
        return EventArrays(
            np.frombuffer(ptr, dtype=np.int64).copy(),
            np.frombuffer(feats, dtype=np.int64).copy(),
            np.frombuffer(targets, dtype=np.int64).copy(),
        )

    # -- comparison / io ----------------------------------------------------

    def __eq__(self, other) -> bool:
        if not isinstance(other, CountStore):
            return NotImplemented
        return (
            self.vocab.words == other.vocab.words
            and self.keys == other.keys
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.targets, other.targets)
            and np.array_equal(self.counts, other.counts)
        )

    def __repr__(self) -> str:
        return f"CountStore(features={self.n_features}, pairs={self.n_pairs}, vocab={len(self.vocab)})"

    def to_text(self) -> str:
        """Text form: pair lines sorted by (key, word), then a totals section."""
        words = self.vocab.words
        lines = []
        for i, key in enumerate(self.keys):
            lo, hi = self.indptr[i], self.indptr[i + 1]
            row = sorted((words[t], int(c)) for t, c in zip(self.targets[lo:hi], self.counts[lo:hi]))
            lines.extend(f"{key}\t{w}\t{c}" for w, c in row)
        lines.append("#totals")
        lines.extend(f"{key}\t*\t{int(t)}" for key, t in zip(self.keys, self.totals))
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")


def _build(vocab: Vocabulary, key_list: list[str], feat_ids: np.ndarray, targets: np.ndarray,
           weights: np.ndarray | None = None) -> tuple[CountStore, np.ndarray]:
    """Store from (feature id, target) observations; returns the id remap too.

    `feat_ids` index into `key_list` (any order); the store re-ranks keys
    in sorted order.
    """
    V = len(vocab)
    order = sorted(range(len(key_list)), key=key_list.__getitem__)
    remap = np.empty(len(key_list), dtype=np.int64)
    remap[order] = np.arange(len(key_list), dtype=np.int64)
    keys = [key_list[o] for o in order]
    if len(feat_ids) == 0:
        return CountStore(vocab, keys, np.zeros(len(keys) + 1, np.int64), [], []), remap
    flat = remap[feat_ids] * V + targets
    if weights is None:
        uniq, counts = np.unique(flat, return_counts=True)
        counts = counts.astype(np.int64)
    else:
        sort = np.argsort(flat, kind="stable")
        flat = flat[sort]
        starts = np.flatnonzero(np.r_[True, flat[1:] != flat[:-1]])
        uniq = flat[starts]
        counts = np.add.reduceat(weights[sort].astype(np.int64), starts)
        keep = counts > 0
        uniq, counts = uniq[keep], counts[keep]
    rows = uniq // V
    indptr = np.zeros(len(keys) + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=len(keys)), out=indptr[1:])
    return CountStore(vocab, keys, indptr, uniq % V, counts), remap


class _Accumulator:
    def __init__(self, vocab: Vocabulary):
        self.vocab = vocab
        self.index: dict[str, int] = {}
        self.keys: list[str] = []
        self.ptr = array("q", [0])
        self.feats = array("q")
        self.targets = array("q")

    def add(self, keys: Iterable[str], target: int) -> None:
        index = self.index
        for k in keys:
            i = index.get(k)
            if i is None:
                i = index[k] = len(self.keys)
                self.keys.append(k)
            self.feats.append(i)
        self.ptr.append(len(self.feats))
        self.targets.append(target)

    def finish(self) -> tuple[CountStore, EventArrays]:
        feats = np.frombuffer(self.feats, dtype=np.int64)
        targets = np.frombuffer(self.targets, dtype=np.int64)
        ptr = np.frombuffer(self.ptr, dtype=np.int64)
        per_pair_targets = np.repeat(targets, np.diff(ptr))
        store, remap = _build(self.vocab, self.keys, feats, per_pair_targets)
        new_feats = remap[feats]
        # keep each event's features in ascending id order
        ev = np.repeat(np.arange(len(targets), dtype=np.int64), np.diff(ptr))
        order = np.lexsort((new_feats, ev))
        events = EventArrays(ptr.copy(), new_feats[order], targets.copy())
        return store, events


def accumulate(events: Iterable[Event], vocab: Vocabulary) -> CountStore:
    """Count every feature-target pair of every event."""
    acc = _Accumulator(vocab)
    for ev in events:
        acc.add((f.key if hasattr(f, "key") else f for f in ev.features), ev.target)
    return acc.finish()[0]


def count_corpus(sentences: Iterable[Sentence], templates: Sequence[Template],
                 vocab: Vocabulary) -> tuple[CountStore, EventArrays]:
    """Counts of a tokenized corpus plus its events encoded on the store ids."""
    acc = _Accumulator(vocab)
    for s in sentences:
        words = s.words
        for pos in range(1, len(s.ids)):
            acc.add(context_keys(words, pos, templates), s.ids[pos])
    return acc.finish()


def relative_frequency(store: CountStore, i: int, j: int) -> float:
    total = store.total(i)
    return store.count(i, j) / total


def merge(a: CountStore, b: CountStore) -> CountStore:
    """Pointwise sum of two stores over the same vocabulary."""
    if a.vocab.words != b.vocab.words:
        raise ConfigError("cannot merge counts built on different vocabularies")
    keys = list(dict.fromkeys(a.keys + b.keys))
    index = {k: n for n, k in enumerate(keys)}
    ids_a = np.array([index[k] for k in a.keys], dtype=np.int64)
    ids_b = np.array([index[k] for k in b.keys], dtype=np.int64)
    feats = np.concatenate([ids_a[a.pair_rows()], ids_b[b.pair_rows()]])
    targets = np.concatenate([a.targets, b.targets])
    weights = np.concatenate([a.counts, b.counts])
    return _build(a.vocab, keys, feats, targets, weights)[0]


def counts_from_text(text: str, vocab: Vocabulary) -> CountStore:
    keys: list[str] = []
    index: dict[str, int] = {}
    feats, targets, weights = [], [], []
    totals: dict[str, int] = {}
    in_totals = False
    for n, line in enumerate(text.splitlines(), 1):
        if not line:
            continue
        if line == "#totals":
            in_totals = True
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise InputError(f"counts line {n}: expected 3 tab-separated fields")
        key, word, c = parts
        try:
            c = int(c)
        except ValueError:
            raise InputError(f"counts line {n}: bad count {c!r}") from None
        if in_totals:
            if word != "*":
                raise InputError(f"counts line {n}: totals lines need '*' as target")
            totals[key] = c
            continue
        if word not in vocab:
            raise ConfigError(f"counts line {n}: target {word!r} not in vocabulary")
        if c < 1:
            raise InputError(f"counts line {n}: counts must be positive")
        i = index.get(key)
        if i is None:
            i = index[key] = len(keys)
            keys.append(key)
        feats.append(i)
        targets.append(vocab.id(word))
        weights.append(c)
    store = _build(
        vocab, keys, np.array(feats, dtype=np.int64), np.array(targets, dtype=np.int64),
        np.array(weights, dtype=np.int64),
    )[0]
    for key, total in totals.items():
        if key not in store or store.total(store.feature_id(key)) != total:
            raise InputError(f"totals section disagrees with pair counts for {key!r}")
    if len(totals) != store.n_features:
        raise InputError("totals section does not cover every feature")
    return store


def read_counts(path, vocab: Vocabulary) -> CountStore:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise InputError(f"cannot read counts {path}: {exc}") from exc
    return counts_from_text(text, vocab)
