"""Hashed metafeature weights and the adjustment function A(i, j).

A metafeature is a conjunction of elementary descriptors of a
feature-target pair, in this fixed order::

    feat=<key>  type=<type id>  fc=<bucket>  tgt=<word>  pc=<bucket>

``fc`` and ``pc`` are the log2 buckets of the feature count C_i* and the
pair count C_ij.  Every non-empty subset of the enabled descriptors is a
metafeature; its canonical key is ``mf|`` followed by the descriptors
joined with ``|``.

With double bucketing a count that is not a power of two contributes two
descriptors, the floor bucket (weight 1 - phi) and the ceiling bucket
(weight phi), where phi is the fractional part of log2(count).  Both
enter the subset enumeration as separate descriptors, so a conjunction
can carry either bucket or both; its weight is the product of the
weights of the bucket descriptors it contains.

Hash contract (platform independent, 64 bit):

* each descriptor string ``d`` hashes to the little-endian integer of
  ``blake2b(d.encode("utf-8"), digest_size=8)``;
* a conjunction ``d1 .. dn`` hashes to ``h_n`` with
  ``h_0 = splitmix64(seed)`` and ``h_k = splitmix64(h_{k-1} XOR hash(d_k))``;
* its weight-table slot is ``h_n mod 2**b``.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from itertools import combinations
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, DomainError

MASK64 = (1 << 64) - 1
DEFAULT_SEED = 0x5EED
DEFAULT_BITS = 24


def splitmix64(x: int) -> int:
    z = (x + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def element_hash(descriptor: str) -> int:
    return int.from_bytes(
        hashlib.blake2b(descriptor.encode("utf-8"), digest_size=8).digest(), "little"
    )


def metafeature_hash(elements, seed: int = DEFAULT_SEED) -> int:
    """64-bit hash of a conjunction given as its descriptor strings."""
    h = splitmix64(seed & MASK64)
    for d in elements:
        h = splitmix64(h ^ element_hash(d))
    return h


@dataclass(frozen=True)
class MetafeatureConfig:
    """Which elementary metafeatures take part in the conjunctions."""

    feature: bool = True
    feature_type: bool = True
    feature_count: bool = True
    target: bool = True
    pair_count: bool = True
    double_bucket_feature_count: bool = False
    double_bucket_pair_count: bool = False

    def __post_init__(self):
        if not (self.feature or self.feature_type or self.feature_count or self.target or self.pair_count):
            raise ConfigError("at least one elementary metafeature must be enabled")

    def flags(self) -> int:
        """Bit mask used by the compiled kernels."""
        bits = (
            self.feature, self.feature_type, self.feature_count, self.target,
            self.pair_count, self.double_bucket_feature_count, self.double_bucket_pair_count,
        )
        return sum(int(b) << n for n, b in enumerate(bits))

    def to_dict(self) -> dict:
        return {
            "feature": self.feature,
            "feature_type": self.feature_type,
            "feature_count": self.feature_count,
            "target": self.target,
            "pair_count": self.pair_count,
            "double_bucket_feature_count": self.double_bucket_feature_count,
            "double_bucket_pair_count": self.double_bucket_pair_count,
        }

    @classmethod
    def from_dict(cls, d: dict) -> MetafeatureConfig:
        unknown = set(d) - set(cls().to_dict())
        if unknown:
            raise ConfigError(f"unknown metafeature flags {sorted(unknown)}")
        return cls(**{k: bool(v) for k, v in d.items()})


class WeightedMetafeature(NamedTuple):
    key: str
    weight: float
    elements: tuple[str, ...]


class WeightTable:
    """Flat array of 2**b metafeature weights; collisions are tolerated."""

    def __init__(self, bits: int = DEFAULT_BITS, seed: int = DEFAULT_SEED, weights=None):
        if not 1 <= bits <= 40:
            raise ConfigError(f"table size exponent must be in 1..40, got {bits}")
        self.bits = bits
        self.seed = seed & MASK64
        if weights is None:
            weights = np.zeros(1 << bits, dtype=np.float64)
        else:
            weights = np.ascontiguousarray(weights, dtype=np.float64)
            if weights.shape != (1 << bits,):
                raise ConfigError("weight array length must be 2**bits")
        self.weights = weights

    @property
    def size(self) -> int:
        return 1 << self.bits

    def slot(self, elements) -> int:
        return metafeature_hash(elements, self.seed) & (self.size - 1)

    def __getitem__(self, elements) -> float:
        return float(self.weights[self.slot(elements)])

    def copy(self) -> WeightTable:
        return WeightTable(self.bits, self.seed, self.weights.copy())


def bucketize(count: int, double: bool = False) -> list[tuple[int, float]]:
    """Log2 bucket(s) of a positive count with their weights.

    >>> bucketize(8, double=True)
    [(3, 1.0)]
    """
    if count < 1:
        raise DomainError(f"count must be >= 1, got {count}")
    count = int(count)
    floor = count.bit_length() - 1
    if not double or count & (count - 1) == 0:
        return [(floor, 1.0)]
    phi = math.log2(count) - floor
    return [(floor, 1.0 - phi), (floor + 1, phi)]


def descriptors(feature_key: str, feature_type: str, target_word: str, feature_count: int,
                pair_count: int, cfg: MetafeatureConfig) -> list[tuple[str, float]]:
    """Enabled elementary descriptors of one pair, in canonical order."""
    out: list[tuple[str, float]] = []
    if cfg.feature:
        out.append((f"feat={feature_key}", 1.0))
    if cfg.feature_type:
        out.append((f"type={feature_type}", 1.0))
    if cfg.feature_count:
        out.extend((f"fc={b}", w) for b, w in bucketize(feature_count, cfg.double_bucket_feature_count))
    if cfg.target:
        out.append((f"tgt={target_word}", 1.0))
    if cfg.pair_count:
        out.extend((f"pc={b}", w) for b, w in bucketize(pair_count, cfg.double_bucket_pair_count))
    return out


def enumerate_metafeatures(feature, target_word: str, feature_count: int, pair_count: int,
                           cfg: MetafeatureConfig) -> list[WeightedMetafeature]:
    """Every weighted conjunction of the pair's descriptors.

    `feature` is a :class:`~snmlm.features.Feature` (key and type id).
    """
    if pair_count > feature_count:
        raise DomainError("pair count exceeds feature count")
    desc = descriptors(feature.key, feature.type_id, target_word, feature_count, pair_count, cfg)
    out = []
    for size in range(1, len(desc) + 1):
        for combo in combinations(desc, size):
            elements = tuple(d for d, _ in combo)
            weight = math.prod(w for _, w in combo)
            out.append(WeightedMetafeature("mf|" + "|".join(elements), weight, elements))
    return out


def adjustment(feature, target_word: str, feature_count: int, pair_count: int,
               table: WeightTable, cfg: MetafeatureConfig) -> float:
    """A(i, j): weighted sum of the table entries of the pair's metafeatures."""
    return math.fsum(
        mf.weight * table.weights[table.slot(mf.elements)]
        for mf in enumerate_metafeatures(feature, target_word, feature_count, pair_count, cfg)
    )


@dataclass
class HashTables:
    """Per-feature / per-target descriptor hashes consumed by the kernels."""

    feat: np.ndarray
    ftype: np.ndarray
    target: np.ndarray
    fc: np.ndarray
    pc: np.ndarray


_N_BUCKETS = 64


def build_hash_tables(keys, types, words) -> HashTables:
    type_cache: dict[str, int] = {}
    ftype = np.empty(len(types), dtype=np.uint64)
    for n, t in enumerate(types):
        h = type_cache.get(t)
        if h is None:
            h = type_cache[t] = element_hash(f"type={t}")
        ftype[n] = h
    return HashTables(
        feat=np.fromiter((element_hash(f"feat={k}") for k in keys), dtype=np.uint64, count=len(keys)),
        ftype=ftype,
        target=np.fromiter((element_hash(f"tgt={w}") for w in words), dtype=np.uint64, count=len(words)),
        fc=np.array([element_hash(f"fc={b}") for b in range(_N_BUCKETS)], dtype=np.uint64),
        pc=np.array([element_hash(f"pc={b}") for b in range(_N_BUCKETS)], dtype=np.uint64),
    )
